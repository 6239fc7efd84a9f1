"""Deterministic scripted traffic generator and scenario runner.

All randomness flows from one 64-bit scenario seed; each device derives
its own stream by hashing the seed with its MAC, so device order never
changes outcomes.  Time is virtual (event timestamps in microseconds);
the full pipeline (datapath -> flow monitor -> profiler -> mitigation)
consumes timestamps from the events, never the wall clock.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import compiler, mud, profiler
from .datapath import Datapath, PacketEvent, Verdict
from .flows import FeatureVector, FlowMonitor
from .netcontext import NetworkContext, context_from_dict, load_context

BEHAVIOUR_CLASSES = ("heartbeat", "stream", "scanner", "flooder", "actuator")


class InvalidScenario(Exception):
    pass


class SchemaError(Exception):
    pass


@dataclass
class DeviceScript:
    mac: str
    ip: str
    behaviour: dict                      # {"class": ..., params}
    compromise_at_s: Optional[float] = None
    attack: Optional[dict] = None


@dataclass
class Scenario:
    name: str
    seed: int
    horizon_s: float
    context: NetworkContext
    scripts: list[DeviceScript] = field(default_factory=list)
    mud_profiles: dict[str, str] = field(default_factory=dict)   # mac -> mud file path
    modes: dict[str, str] = field(default_factory=dict)          # mac -> datapath mode
    window_len_s: float = 60.0
    min_windows: int = profiler.DEFAULT_MIN_WINDOWS
    alert_threshold: float = profiler.DEFAULT_ALERT_THRESHOLD
    isolate_threshold: float = profiler.DEFAULT_ISOLATE_THRESHOLD
    unmanaged_policy: str = "allow+log"
    expectations: dict = field(default_factory=dict)
    base_dir: Optional[Path] = None      # relative mud_profiles paths resolve here

    def validate(self) -> None:
        for s in self.scripts:
            if self.context.device_by_mac(s.mac) is None:
                raise InvalidScenario(f"script device {s.mac} not in context")
            cls = s.behaviour.get("class")
            if cls not in BEHAVIOUR_CLASSES:
                raise InvalidScenario(f"unknown behaviour class '{cls}'")
            if s.compromise_at_s is not None:
                if s.compromise_at_s > self.horizon_s:
                    raise InvalidScenario("compromise_at beyond scenario horizon")
                if s.attack is None:
                    raise InvalidScenario(f"{s.mac}: compromise_at without attack script")


@dataclass
class ScenarioMetrics:
    packets_total: int = 0
    accepted: int = 0
    dropped_by_reason: dict[str, int] = field(default_factory=dict)
    time_to_detect_s: Optional[float] = None
    time_to_mitigate_s: Optional[float] = None
    post_mitigation_leak_bytes: int = 0

    def to_json(self) -> dict:
        return {
            "packets_total": self.packets_total,
            "accepted": self.accepted,
            "dropped_by_reason": dict(sorted(self.dropped_by_reason.items())),
            "time_to_detect_s": self.time_to_detect_s,
            "time_to_mitigate_s": self.time_to_mitigate_s,
            "post_mitigation_leak_bytes": self.post_mitigation_leak_bytes,
        }


@dataclass
class ScenarioResult:
    events: list[PacketEvent]
    verdicts: list[Verdict]
    metrics: ScenarioMetrics
    anomalies: list[profiler.AnomalyReport]
    features: list[FeatureVector]
    datapath: Datapath
    monitor: FlowMonitor


# ---------------------------------------------------------------------------
# script event generation

def _device_rng(seed: int, mac: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{mac}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _gen_behaviour(behaviour: dict, mac: str, ip: str, rng: random.Random,
                   start_s: float, end_s: float, ctx: NetworkContext) -> list[PacketEvent]:
    cls = behaviour["class"]
    events: list[PacketEvent] = []

    def pkt(ts_s, dst_ip, proto, dst_port, size, actuation=None):
        return PacketEvent(
            ts=int(ts_s * 1e6), src_mac=mac, dst_mac="gw", src_ip=ip, dst_ip=dst_ip,
            protocol=proto, src_port=rng.randint(32768, 60999), dst_port=dst_port,
            length=size, direction="from-device", actuation_class=actuation)

    if cls == "heartbeat":
        period = float(behaviour["period_s"])
        ep = behaviour["endpoint"]
        size = int(behaviour["size"])
        jitter = float(behaviour.get("jitter", 0.05))
        t = start_s + rng.uniform(0, period)
        while t < end_s:
            events.append(pkt(t, ep["ip"], ep.get("protocol", "tcp"), ep["port"],
                              max(1, int(size * (1 + rng.uniform(-jitter, jitter))))))
            t += period * (1 + rng.uniform(-jitter, jitter))

    elif cls == "stream":
        rate = float(behaviour["rate_bps"])       # bytes/s
        ep = behaviour["endpoint"]
        size = int(behaviour["pkt_size"])
        interval = size / rate
        jitter = float(behaviour.get("jitter", 0.05))
        t = start_s + rng.uniform(0, interval)
        while t < end_s:
            events.append(pkt(t, ep["ip"], ep.get("protocol", "tcp"), ep["port"], size))
            t += interval * (1 + rng.uniform(-jitter, jitter))

    elif cls == "scanner":
        tps = float(behaviour["targets_per_s"])
        subnet = behaviour["subnet"]              # e.g. "192.168.1.0/24"
        base = subnet.split("/")[0].rsplit(".", 1)[0]
        size = int(behaviour.get("size", 60))
        t = start_s + rng.uniform(0, 1.0 / tps)
        while t < end_s:
            target = f"{base}.{rng.randint(1, 254)}"
            events.append(pkt(t, target, "tcp", rng.choice((22, 23, 80, 443, 8080)), size))
            t += (1.0 / tps) * (1 + rng.uniform(-0.2, 0.2))

    elif cls == "flooder":
        pps = float(behaviour["pps"])
        target = behaviour["target"]
        size = int(behaviour["size"])
        t = start_s
        while t < end_s:
            events.append(pkt(t, target["ip"], target.get("protocol", "tcp"),
                              target["port"], size))
            t += 1.0 / pps
    elif cls == "actuator":
        epm = float(behaviour["events_per_min"])
        ep = behaviour["endpoint"]
        actuation = behaviour.get("actuation_class", "actuate")
        size = int(behaviour.get("size", 120))
        period = 60.0 / epm
        t = start_s + rng.uniform(0, period)
        while t < end_s:
            events.append(pkt(t, ep["ip"], ep.get("protocol", "tcp"), ep["port"],
                              size, actuation=actuation))
            t += period * (1 + rng.uniform(-0.1, 0.1))
    else:
        raise InvalidScenario(f"unknown behaviour class '{cls}'")
    return events


def generate_events(s: Scenario) -> list[PacketEvent]:
    all_events: list[PacketEvent] = []
    for script in s.scripts:
        rng = _device_rng(s.seed, script.mac)
        if script.compromise_at_s is None:
            all_events.extend(_gen_behaviour(script.behaviour, script.mac, script.ip,
                                             rng, 0.0, s.horizon_s, s.context))
        else:
            all_events.extend(_gen_behaviour(script.behaviour, script.mac, script.ip,
                                             rng, 0.0, script.compromise_at_s, s.context))
            all_events.extend(_gen_behaviour(script.attack, script.mac, script.ip,
                                             rng, script.compromise_at_s, s.horizon_s, s.context))
    all_events.sort(key=lambda e: (e.ts, e.src_mac))
    return all_events


# ---------------------------------------------------------------------------
# scenario running

def _build_datapath(s: Scenario, mud_dir: Optional[Path] = None) -> Datapath:
    dp = Datapath(gateway_ip=s.context.gateway_ip, unmanaged_policy=s.unmanaged_policy,
                  record_verdicts=True)
    base = mud_dir if mud_dir is not None else s.base_dir
    for mac, mud_path in s.mud_profiles.items():
        device = s.context.device_by_mac(mac)
        if device is None:
            raise InvalidScenario(f"MUD binding for unknown device {mac}")
        path = Path(mud_path)
        if base is not None and not path.is_absolute():
            path = base / path
        profile = mud.load_mud_file(path)
        ruleset, _ = compiler.compile(profile, s.context, device)
        dp.install_ruleset(ruleset)
    for d in s.context.devices:
        dp.register(d.mac)
    for mac, mode in s.modes.items():
        dp.set_mode(mac, mode)
    return dp


def run_scenario(s: Scenario, mud_dir: Optional[Path] = None,
                 events: Optional[list[PacketEvent]] = None) -> ScenarioResult:
    """Run the full pipeline over generated (or supplied) events."""
    s.validate()
    if events is None:
        events = generate_events(s)

    dp = _build_datapath(s, mud_dir)
    monitor = FlowMonitor(window_len_s=s.window_len_s)
    verdicts: list[Verdict] = []
    anomalies: list[profiler.AnomalyReport] = []
    features: list[FeatureVector] = []

    compromised = {sc.mac: sc.compromise_at_s for sc in s.scripts
                   if sc.compromise_at_s is not None}
    profiles: dict[str, profiler.DeviceProfile] = {}
    training: dict[str, list[FeatureVector]] = {}
    window_us = monitor.window_len_us
    next_window_close = window_us
    isolated_at: dict[str, int] = {}

    metrics = ScenarioMetrics()
    first_detect_us: Optional[int] = None
    first_mitigate_us: Optional[int] = None

    def close_windows(up_to_ts: int) -> None:
        nonlocal next_window_close, first_detect_us
        while next_window_close <= up_to_ts:
            start = next_window_close - window_us
            monitor.max_ts = max(monitor.max_ts, next_window_close)
            for mac in sorted(monitor.devices()):
                fv = monitor.window_features(mac, start)
                features.append(fv)
                prof = profiles.get(mac)
                if prof is None:
                    hist = training.setdefault(mac, [])
                    hist.append(fv)
                    if len(hist) >= s.min_windows:
                        device = s.context.device_by_mac(mac)
                        cid = profiler.class_id_for(device.manufacturer, device.model) \
                            if device else mac
                        profiles[mac] = profiler.learn_profile(hist, cid,
                                                               min_windows=s.min_windows)
                    continue
                report = profiler.score(fv, prof, alert_threshold=s.alert_threshold,
                                        isolate_threshold=s.isolate_threshold)
                if report.proposed_action != "none":
                    anomalies.append(report)
                    if (report.score >= s.alert_threshold and first_detect_us is None
                            and mac in compromised
                            and next_window_close >= int(compromised[mac] * 1e6)):
                        first_detect_us = next_window_close
                    if report.proposed_action == "isolate" and mac not in isolated_at:
                        dp.set_mode(mac, "isolated")
                        isolated_at[mac] = next_window_close
            next_window_close += window_us

    for e in events:
        close_windows(e.ts)
        v = dp.process_packet(e)
        verdicts.append(v)
        monitor.ingest(e, v)

        metrics.packets_total += 1
        if v.accepted:
            metrics.accepted += 1
        else:
            metrics.dropped_by_reason[v.reason] = metrics.dropped_by_reason.get(v.reason, 0) + 1

        mac = e.device_mac
        if mac in compromised and e.ts >= int(compromised[mac] * 1e6):
            if not v.accepted and v.reason in ("RateLimited", "ManualIsolate") \
                    and first_mitigate_us is None:
                first_mitigate_us = e.ts
            if v.accepted:
                # leak counts attack bytes accepted after the definitive
                # mitigation (isolation); before isolation, after the first
                # rate-limit drop if the device is never isolated
                if mac in isolated_at and e.ts >= isolated_at[mac]:
                    metrics.post_mitigation_leak_bytes += e.length
    close_windows(int(s.horizon_s * 1e6))

    if first_mitigate_us is not None and not isolated_at:
        leak = 0
        for e, v in zip(events, verdicts):
            mac = e.device_mac
            if mac in compromised and v.accepted and e.ts > first_mitigate_us:
                leak += e.length
        metrics.post_mitigation_leak_bytes = leak

    if first_detect_us is not None:
        earliest = min(compromised.values())
        metrics.time_to_detect_s = first_detect_us / 1e6 - earliest
    if first_mitigate_us is not None:
        earliest = min(compromised.values())
        metrics.time_to_mitigate_s = first_mitigate_us / 1e6 - earliest

    return ScenarioResult(events=events, verdicts=verdicts, metrics=metrics,
                          anomalies=anomalies, features=features,
                          datapath=dp, monitor=monitor)


def replay(s: Scenario, trace_path, mud_dir: Optional[Path] = None) -> ScenarioResult:
    """Feed a recorded event trace through the pipeline with identical
    initial state."""
    events = read_trace(trace_path)
    return run_scenario(s, mud_dir=mud_dir, events=events)


# ---------------------------------------------------------------------------
# corpus generation for the profiler

def generate_corpus(classes: dict[str, dict], windows_per_class: int,
                    seed: int, window_len_s: float = 60.0) -> list[tuple[str, FeatureVector]]:
    """Labelled feature-vector corpus: each class's behaviour script is run
    through a dedicated flow monitor for the requested number of windows."""
    if len(classes) < 2:
        raise InvalidScenario("need at least 2 classes")
    corpus: list[tuple[str, FeatureVector]] = []
    for label in sorted(classes):
        behaviour = classes[label]
        tag = hashlib.sha256(label.encode()).digest()
        mac = "02:00:00:" + ":".join(f"{b:02x}" for b in tag[:3])
        ip = "192.168.77.10"
        rng = _device_rng(seed, f"{label}:{mac}")
        horizon_s = windows_per_class * window_len_s
        monitor = FlowMonitor(window_len_s=window_len_s)
        events = _gen_behaviour(behaviour, mac, ip, rng, 0.0, horizon_s, NetworkContext())
        accept = Verdict("Accept", "RuleAccept")
        for e in sorted(events, key=lambda e: e.ts):
            monitor.ingest(e, accept)
        monitor.max_ts = int(horizon_s * 1e6)
        for start in monitor.closed_window_starts(mac):
            corpus.append((label, monitor.window_features(mac, start)))
    return corpus


# ---------------------------------------------------------------------------
# scenario files and traces

def scenario_from_dict(raw: dict, base_dir: Optional[Path] = None) -> Scenario:
    try:
        ctx_spec = raw["context"]
        if isinstance(ctx_spec, str):
            path = Path(ctx_spec)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            context = load_context(path)
        else:
            context = context_from_dict(ctx_spec)
        scripts = []
        for rd in raw.get("devices", []):
            scripts.append(DeviceScript(
                mac=rd["mac"],
                ip=rd.get("ip") or context.device_by_mac(rd["mac"]).ipv4,
                behaviour=rd["behaviour"],
                compromise_at_s=rd.get("compromise_at_s"),
                attack=rd.get("attack"),
            ))
        s = Scenario(
            name=raw["name"],
            seed=int(raw["seed"]),
            horizon_s=float(raw["horizon_s"]),
            context=context,
            scripts=scripts,
            mud_profiles=dict(raw.get("mud_profiles", {})),
            modes=dict(raw.get("modes", {})),
            window_len_s=float(raw.get("window_len_s", 60.0)),
            min_windows=int(raw.get("min_windows", profiler.DEFAULT_MIN_WINDOWS)),
            alert_threshold=float(raw.get("alert_threshold", profiler.DEFAULT_ALERT_THRESHOLD)),
            isolate_threshold=float(raw.get("isolate_threshold", profiler.DEFAULT_ISOLATE_THRESHOLD)),
            unmanaged_policy=raw.get("unmanaged_policy", "allow+log"),
            expectations=dict(raw.get("expectations", {})),
            base_dir=base_dir,
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidScenario(f"bad scenario file: {exc}") from exc
    s.validate()
    return s


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            if path.suffix in (".yaml", ".yml"):
                raw = yaml.safe_load(fh)
            else:
                raw = json.load(fh)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise InvalidScenario(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidScenario("scenario file must hold a mapping")
    return scenario_from_dict(raw, base_dir=path.parent)


def check_expectations(metrics: ScenarioMetrics, expectations: dict) -> list[str]:
    """Evaluate scenario-embedded assertions; returns failure messages."""
    failures: list[str] = []

    def fail(msg):
        failures.append(msg)

    exp = expectations
    if "time_to_detect_max_s" in exp:
        limit = float(exp["time_to_detect_max_s"])
        if metrics.time_to_detect_s is None or metrics.time_to_detect_s > limit:
            fail(f"time_to_detect {metrics.time_to_detect_s} > {limit}")
    if "time_to_mitigate_max_s" in exp:
        limit = float(exp["time_to_mitigate_max_s"])
        if metrics.time_to_mitigate_s is None or metrics.time_to_mitigate_s > limit:
            fail(f"time_to_mitigate {metrics.time_to_mitigate_s} > {limit}")
    if "post_mitigation_leak_max_bytes" in exp:
        limit = int(exp["post_mitigation_leak_max_bytes"])
        if metrics.post_mitigation_leak_bytes > limit:
            fail(f"post_mitigation_leak {metrics.post_mitigation_leak_bytes} B > {limit} B")
    if "no_drops_except" in exp:
        allowed = set(exp["no_drops_except"])
        for reason, n in metrics.dropped_by_reason.items():
            if n and reason not in allowed:
                fail(f"unexpected drops: {n} x {reason}")
    if "min_dropped" in exp:
        for reason, minimum in exp["min_dropped"].items():
            got = metrics.dropped_by_reason.get(reason, 0)
            if got < int(minimum):
                fail(f"dropped {got} x {reason} < required {minimum}")
    return failures


def write_trace(path, events: list[PacketEvent]) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e.to_json()) + "\n")
    return len(events)


def read_trace(path) -> list[PacketEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(PacketEvent.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise SchemaError(f"line {i + 1}: {exc}") from exc
    return events


def trace_hash(events: list[PacketEvent]) -> str:
    h = hashlib.sha256()
    for e in events:
        h.update(json.dumps(e.to_json(), sort_keys=True).encode())
    return h.hexdigest()
