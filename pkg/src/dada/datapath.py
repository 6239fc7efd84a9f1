"""Stateful per-packet enforcement engine.

Applies compiled rule sets with default deny, token-bucket rate limiting,
guest isolation, manual isolation and actuation-event limits.  Drop-cause
precedence: manual isolation > guest isolation > actuation limit > rule
lookup > rate limit on the matched rule > default deny.

Time is virtual: all refill and window arithmetic uses the event timestamp
(microseconds since scenario start).  Only the per-packet processing
latency is measured on the wall clock.
"""

from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .compiler import PacketHeader, RuleSet, lookup
from .mud import RateSpec

MODES = ("normal", "guest", "isolated", "privileged", "unprivileged")


class UnknownDevice(Exception):
    pass


class EmptyHistogram(Exception):
    pass


@dataclass
class PacketEvent:
    ts: int                      # microseconds since scenario start
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    protocol: Optional[str]      # tcp | udp | icmp | None
    src_port: Optional[int]
    dst_port: Optional[int]
    length: int
    direction: str               # "from-device" | "to-device"
    actuation_class: Optional[str] = None
    tcp_flags: Optional[str] = None

    @property
    def device_mac(self) -> str:
        return self.src_mac if self.direction == "from-device" else self.dst_mac

    def to_json(self) -> dict:
        d = {
            "ts": self.ts, "src_mac": self.src_mac, "dst_mac": self.dst_mac,
            "src_ip": self.src_ip, "dst_ip": self.dst_ip, "protocol": self.protocol,
            "src_port": self.src_port, "dst_port": self.dst_port,
            "length": self.length, "direction": self.direction,
        }
        if self.actuation_class is not None:
            d["actuation_class"] = self.actuation_class
        if self.tcp_flags is not None:
            d["tcp_flags"] = self.tcp_flags
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PacketEvent":
        return cls(
            ts=d["ts"], src_mac=d["src_mac"], dst_mac=d["dst_mac"],
            src_ip=d["src_ip"], dst_ip=d["dst_ip"], protocol=d.get("protocol"),
            src_port=d.get("src_port"), dst_port=d.get("dst_port"),
            length=d["length"], direction=d["direction"],
            actuation_class=d.get("actuation_class"), tcp_flags=d.get("tcp_flags"),
        )


@dataclass
class Verdict:
    kind: str                    # "Accept" | "Drop"
    reason: str                  # RuleAccept|DefaultDeny|RateLimited|GuestIsolation|ActuationLimit|ManualIsolate|Unmanaged
    rule_provenance: Optional[str] = None
    latency_ns: int = 0

    @property
    def accepted(self) -> bool:
        return self.kind == "Accept"


class TokenBucket:
    """Byte bucket with a companion packet bucket, refilled from virtual time.

    Tokens never exceed the burst capacity; a packet is admitted only if
    the byte tokens cover its full length and a whole packet token is
    available.  A zero burst falls back to one second's worth of rate.
    """

    __slots__ = ("rate", "burst", "tokens", "pkt_rate", "pkt_burst", "pkt_tokens", "last_refill")

    def __init__(self, spec: RateSpec, now_us: int):
        self.rate = float(spec.max_bytes_per_second)
        self.burst = float(spec.burst_bytes) if spec.burst_bytes > 0 else max(self.rate, 1.0)
        self.pkt_rate = float(spec.max_packets_per_second)
        self.pkt_burst = max(self.pkt_rate, 1.0)
        self.tokens = self.burst
        self.pkt_tokens = self.pkt_burst
        self.last_refill = now_us

    def _refill(self, now_us: int) -> None:
        dt = (now_us - self.last_refill) / 1e6
        if dt <= 0:
            return
        if self.rate > 0:
            self.tokens = min(self.burst, self.tokens + self.rate * dt)
        if self.pkt_rate > 0:
            self.pkt_tokens = min(self.pkt_burst, self.pkt_tokens + self.pkt_rate * dt)
        self.last_refill = now_us

    def try_admit(self, now_us: int, length: int) -> bool:
        self._refill(now_us)
        if self.rate > 0 and self.tokens < length:
            return False
        if self.pkt_rate > 0 and self.pkt_tokens < 1.0:
            return False
        if self.rate > 0:
            self.tokens -= length
        if self.pkt_rate > 0:
            self.pkt_tokens -= 1.0
        return True


@dataclass
class DeviceState:
    mac: str
    ruleset: Optional[RuleSet] = None
    unprivileged_ruleset: Optional[RuleSet] = None
    generation: int = 0
    mode: str = "normal"
    buckets: dict[str, TokenBucket] = field(default_factory=dict)
    device_bucket: Optional[TokenBucket] = None
    actuation_windows: dict[str, deque] = field(default_factory=dict)
    logging: bool = False


class LatencyHistogram:
    """Log-spaced (power-of-two ns) latency buckets plus running mean."""

    def __init__(self):
        self.counts: dict[int, int] = {}
        self.total = 0
        self.sum_ns = 0

    def record(self, ns: int) -> None:
        idx = max(ns, 1).bit_length() - 1
        self.counts[idx] = self.counts.get(idx, 0) + 1
        self.total += 1
        self.sum_ns += ns

    def _quantile(self, q: float) -> int:
        target = q * self.total
        acc = 0
        for idx in sorted(self.counts):
            acc += self.counts[idx]
            if acc >= target:
                return 1 << idx
        return 1 << max(self.counts)

    def report(self) -> dict:
        if self.total == 0:
            raise EmptyHistogram("no packets processed")
        return {
            "count": self.total,
            "mean_ns": self.sum_ns / self.total,
            "p50_ns": self._quantile(0.50),
            "p99_ns": self._quantile(0.99),
            "buckets": [
                {"low_ns": 1 << idx, "high_ns": 1 << (idx + 1), "count": n}
                for idx, n in sorted(self.counts.items())
            ],
        }


class Datapath:
    """In-process stand-in for the kernel enforcement path."""

    def __init__(self, gateway_ip: str,
                 unmanaged_policy: str = "allow+log",
                 actuation_window_s: float = 60.0,
                 actuation_max_events: int = 3,
                 device_rate_specs: Optional[dict[str, RateSpec]] = None,
                 record_verdicts: bool = False,
                 on_reboot: Optional[Callable[[str, int], None]] = None):
        if unmanaged_policy not in ("allow+log", "allow", "drop"):
            raise ValueError(f"bad unmanaged policy '{unmanaged_policy}'")
        self.gateway_ip = gateway_ip
        self.unmanaged_policy = unmanaged_policy
        self.actuation_window_us = int(actuation_window_s * 1e6)
        self.actuation_max_events = actuation_max_events
        self.device_rate_specs = device_rate_specs or {}
        self.states: dict[str, DeviceState] = {}
        self.histogram = LatencyHistogram()
        self.drop_counts: dict[str, int] = {}
        self.record_verdicts = record_verdicts
        self.trace: list[tuple[PacketEvent, Verdict]] = []
        self.on_reboot = on_reboot

    # -- state management ---------------------------------------------------

    def register(self, mac: str) -> DeviceState:
        st = self.states.get(mac)
        if st is None:
            st = DeviceState(mac=mac)
            self.states[mac] = st
        return st

    def install_ruleset(self, rs: RuleSet, unprivileged: Optional[RuleSet] = None) -> int:
        """Atomic swap to a new generation.  Buckets for surviving rule
        provenances keep their token state; new rules start full."""
        st = self.register(rs.device_mac)
        st.generation += 1
        rs.generation = st.generation
        if unprivileged is not None:
            unprivileged.generation = st.generation
        st.ruleset = rs
        st.unprivileged_ruleset = unprivileged
        survivors = {r.provenance for r in rs.rules}
        if unprivileged is not None:
            survivors |= {r.provenance for r in unprivileged.rules}
        st.buckets = {p: b for p, b in st.buckets.items() if p in survivors}
        return st.generation

    def set_mode(self, mac: str, mode: str) -> str:
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}'")
        st = self.states.get(mac)
        if st is None:
            raise UnknownDevice(mac)
        prev, st.mode = st.mode, mode
        return prev

    def set_logging(self, mac: str, on: bool) -> None:
        self.register(mac).logging = on

    def reboot(self, mac: str, ts: int) -> None:
        """Simulated reboot: flush bucket and actuation state."""
        st = self.states.get(mac)
        if st is None:
            raise UnknownDevice(mac)
        st.buckets.clear()
        st.device_bucket = None
        st.actuation_windows.clear()
        if self.on_reboot is not None:
            self.on_reboot(mac, ts)

    # -- per-packet path ----------------------------------------------------

    def process_packet(self, e: PacketEvent) -> Verdict:
        t0 = time.perf_counter_ns()
        v = self._decide(e)
        if v.kind == "Accept" and e.actuation_class is not None:
            st = self.states.get(e.device_mac)
            if st is not None:
                st.actuation_windows.setdefault(e.actuation_class, deque()).append(e.ts)
        v.latency_ns = time.perf_counter_ns() - t0
        self.histogram.record(v.latency_ns)
        if v.kind == "Drop":
            self.drop_counts[e.device_mac] = self.drop_counts.get(e.device_mac, 0) + 1
        if self.record_verdicts:
            self.trace.append((e, v))
        return v

    def _decide(self, e: PacketEvent) -> Verdict:
        st = self.states.get(e.device_mac)
        mode = st.mode if st is not None else "normal"

        if mode == "isolated":
            return Verdict("Drop", "ManualIsolate")

        if mode == "guest":
            remote = e.dst_ip if e.direction == "from-device" else e.src_ip
            if remote != self.gateway_ip:
                return Verdict("Drop", "GuestIsolation")

        if e.actuation_class is not None and st is not None:
            window = st.actuation_windows.get(e.actuation_class)
            if window is None:
                window = deque()
                st.actuation_windows[e.actuation_class] = window
            floor = e.ts - self.actuation_window_us
            while window and window[0] <= floor:
                window.popleft()
            if len(window) >= self.actuation_max_events:
                return Verdict("Drop", "ActuationLimit")

        ruleset = None
        if st is not None:
            ruleset = st.unprivileged_ruleset if mode == "unprivileged" else st.ruleset
            if mode == "unprivileged" and ruleset is None:
                ruleset = st.ruleset

        if ruleset is None:
            # unmanaged device: configurable default policy
            if self.unmanaged_policy == "drop":
                return Verdict("Drop", "Unmanaged")
            return Verdict("Accept", "Unmanaged")

        result = lookup(ruleset, self._header(e))
        if result.action == "drop":
            return Verdict("Drop", "DefaultDeny",
                           rule_provenance=None if result.provenance == "default" else result.provenance)

        if result.rate is not None:
            bucket = st.buckets.get(result.provenance)
            if bucket is None:
                bucket = TokenBucket(result.rate, e.ts)
                st.buckets[result.provenance] = bucket
            if not bucket.try_admit(e.ts, e.length):
                return Verdict("Drop", "RateLimited", rule_provenance=result.provenance)

        spec = self.device_rate_specs.get(e.device_mac)
        if spec is not None:
            if st.device_bucket is None:
                st.device_bucket = TokenBucket(spec, e.ts)
            if not st.device_bucket.try_admit(e.ts, e.length):
                return Verdict("Drop", "RateLimited", rule_provenance="device-aggregate")

        return Verdict("Accept", "RuleAccept", rule_provenance=result.provenance)

    @staticmethod
    def _header(e: PacketEvent) -> PacketHeader:
        if e.direction == "from-device":
            return PacketHeader(e.src_mac, "from-device", e.protocol,
                                e.dst_ip, e.dst_port, e.src_port)
        return PacketHeader(e.dst_mac, "to-device", e.protocol,
                            e.src_ip, e.src_port, e.dst_port)

    # -- reporting ----------------------------------------------------------

    def latency_report(self) -> dict:
        return self.histogram.report()

    def export_verdicts(self, path) -> int:
        n = 0
        with open(path, "w", encoding="utf-8") as fh:
            for e, v in self.trace:
                fh.write(json.dumps({
                    "ts": e.ts, "mac": e.device_mac, "kind": v.kind, "reason": v.reason,
                    "provenance": v.rule_provenance, "latency_ns": v.latency_ns,
                }) + "\n")
                n += 1
        return n

    def export_latency_csv(self, path) -> None:
        report = self.latency_report()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bucket_low_ns", "bucket_high_ns", "count"])
            for b in report["buckets"]:
                w.writerow([b["low_ns"], b["high_ns"], b["count"]])
