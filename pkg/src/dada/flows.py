"""Flow table and per-device windowed feature extraction.

Flows are keyed device-side ("local" is always the device); statistics use
streaming (Welford) mean/variance updates.  Features are computed over
tumbling windows from accepted traffic only; drops feed a per-device drop
counter side channel so that profiles describe admitted behaviour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .datapath import PacketEvent, Verdict

FEATURE_DIMS = (
    "flow_count",
    "new_flow_count",
    "unique_remote_ips",
    "pkts_out_rate",
    "pkts_in_rate",
    "bytes_out_rate",
    "bytes_in_rate",
    "mean_pkt_size",
    "mean_inter_arrival_ms",
    "tcp_share",
    "udp_share",
    "new_destination_rate",
)

N_DIMS = len(FEATURE_DIMS)


class WindowNotClosed(Exception):
    pass


class IoFailure(Exception):
    pass


@dataclass(frozen=True)
class FlowKey:
    device_mac: str
    remote_ip: str
    protocol: Optional[str]
    local_port: Optional[int]
    remote_port: Optional[int]
    direction: str


@dataclass
class FlowRecord:
    key: FlowKey
    packets: int = 0
    bytes: int = 0
    first_ts: int = 0
    last_ts: int = 0
    # streaming inter-arrival stats (microseconds)
    iat_count: int = 0
    iat_mean: float = 0.0
    iat_m2: float = 0.0
    iat_min: float = 0.0
    iat_max: float = 0.0
    tcp_flag_counts: dict[str, int] = field(default_factory=dict)

    def update(self, e: PacketEvent) -> None:
        if self.packets > 0:
            delta = float(e.ts - self.last_ts)
            self.iat_count += 1
            d = delta - self.iat_mean
            self.iat_mean += d / self.iat_count
            self.iat_m2 += d * (delta - self.iat_mean)
            if self.iat_count == 1:
                self.iat_min = self.iat_max = delta
            else:
                self.iat_min = min(self.iat_min, delta)
                self.iat_max = max(self.iat_max, delta)
        else:
            self.first_ts = e.ts
        self.packets += 1
        self.bytes += e.length
        self.last_ts = e.ts
        if e.tcp_flags:
            for flag in e.tcp_flags:
                self.tcp_flag_counts[flag] = self.tcp_flag_counts.get(flag, 0) + 1

    @property
    def iat_variance(self) -> float:
        if self.iat_count < 2:
            return 0.0
        return self.iat_m2 / (self.iat_count - 1)

    def to_json(self) -> dict:
        k = self.key
        return {
            "device_mac": k.device_mac, "remote_ip": k.remote_ip, "protocol": k.protocol,
            "local_port": k.local_port, "remote_port": k.remote_port, "direction": k.direction,
            "packets": self.packets, "bytes": self.bytes,
            "first_ts": self.first_ts, "last_ts": self.last_ts,
            "iat_count": self.iat_count, "iat_mean": self.iat_mean, "iat_m2": self.iat_m2,
            "iat_min": self.iat_min, "iat_max": self.iat_max,
            "tcp_flag_counts": self.tcp_flag_counts,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FlowRecord":
        key = FlowKey(d["device_mac"], d["remote_ip"], d.get("protocol"),
                      d.get("local_port"), d.get("remote_port"), d["direction"])
        rec = cls(key=key, packets=d["packets"], bytes=d["bytes"],
                  first_ts=d["first_ts"], last_ts=d["last_ts"],
                  iat_count=d["iat_count"], iat_mean=d["iat_mean"], iat_m2=d["iat_m2"],
                  iat_min=d["iat_min"], iat_max=d["iat_max"],
                  tcp_flag_counts=dict(d.get("tcp_flag_counts", {})))
        return rec


@dataclass
class FeatureVector:
    device_mac: str
    window_start: int            # microseconds
    window_len: float            # seconds
    dims: tuple[float, ...]      # fixed order, see FEATURE_DIMS

    def __getitem__(self, name: str) -> float:
        return self.dims[FEATURE_DIMS.index(name)]

    def to_json(self) -> dict:
        d = {"device_mac": self.device_mac, "window_start": self.window_start,
             "window_len": self.window_len}
        d.update(zip(FEATURE_DIMS, self.dims))
        return d


class _WindowAcc:
    """Per-device accumulator for one tumbling window."""

    __slots__ = ("flows", "new_flows", "remote_ips", "new_remote_ips",
                 "pkts_out", "pkts_in", "bytes_out", "bytes_in",
                 "tcp_pkts", "udp_pkts", "last_ts", "iat_n", "iat_sum")

    def __init__(self):
        self.flows: set = set()
        self.new_flows = 0
        self.remote_ips: set = set()
        self.new_remote_ips = 0
        self.pkts_out = 0
        self.pkts_in = 0
        self.bytes_out = 0
        self.bytes_in = 0
        self.tcp_pkts = 0
        self.udp_pkts = 0
        self.last_ts: Optional[int] = None
        self.iat_n = 0
        self.iat_sum = 0.0


class FlowMonitor:
    def __init__(self, window_len_s: float = 60.0, idle_timeout_s: float = 300.0):
        self.window_len_s = window_len_s
        self.window_len_us = int(window_len_s * 1e6)
        self.idle_timeout_s = idle_timeout_s
        self.flows: dict[FlowKey, FlowRecord] = {}
        self.drop_counts: dict[str, int] = {}
        self.max_ts = 0
        self._windows: dict[tuple[str, int], _WindowAcc] = {}
        self._seen_remotes: dict[str, set] = {}
        self._devices: set[str] = set()

    # -- ingestion ----------------------------------------------------------

    def ingest(self, e: PacketEvent, v: Verdict) -> None:
        mac = e.device_mac
        self._devices.add(mac)
        self.max_ts = max(self.max_ts, e.ts)
        if not v.accepted:
            self.drop_counts[mac] = self.drop_counts.get(mac, 0) + 1
            return

        remote_ip = e.dst_ip if e.direction == "from-device" else e.src_ip
        local_port = e.src_port if e.direction == "from-device" else e.dst_port
        remote_port = e.dst_port if e.direction == "from-device" else e.src_port
        key = FlowKey(mac, remote_ip, e.protocol, local_port, remote_port, e.direction)

        rec = self.flows.get(key)
        is_new_flow = rec is None
        if is_new_flow:
            rec = FlowRecord(key=key)
            self.flows[key] = rec
        rec.update(e)

        widx = e.ts // self.window_len_us
        acc = self._windows.get((mac, widx))
        if acc is None:
            acc = _WindowAcc()
            self._windows[(mac, widx)] = acc
        acc.flows.add(key)
        if is_new_flow:
            acc.new_flows += 1
        if remote_ip not in acc.remote_ips:
            acc.remote_ips.add(remote_ip)
            seen = self._seen_remotes.setdefault(mac, set())
            if remote_ip not in seen:
                seen.add(remote_ip)
                acc.new_remote_ips += 1
        if e.direction == "from-device":
            acc.pkts_out += 1
            acc.bytes_out += e.length
        else:
            acc.pkts_in += 1
            acc.bytes_in += e.length
        if e.protocol == "tcp":
            acc.tcp_pkts += 1
        elif e.protocol == "udp":
            acc.udp_pkts += 1
        if acc.last_ts is not None:
            acc.iat_n += 1
            acc.iat_sum += e.ts - acc.last_ts
        acc.last_ts = e.ts

    # -- feature extraction ---------------------------------------------------

    def window_features(self, mac: str, window_start: int) -> FeatureVector:
        """Features for the tumbling window starting at window_start (µs).
        The window must be fully elapsed (max observed ts past its end)."""
        if window_start % self.window_len_us != 0:
            raise ValueError("window_start must be aligned to the window length")
        if self.max_ts < window_start + self.window_len_us:
            raise WindowNotClosed(f"window [{window_start}, +{self.window_len_us}) not elapsed")
        acc = self._windows.get((mac, window_start // self.window_len_us))
        wl = self.window_len_s
        if acc is None:
            dims = (0.0,) * N_DIMS
        else:
            pkts = acc.pkts_out + acc.pkts_in
            total_bytes = acc.bytes_out + acc.bytes_in
            dims = (
                float(len(acc.flows)),
                float(acc.new_flows),
                float(len(acc.remote_ips)),
                acc.pkts_out / wl,
                acc.pkts_in / wl,
                acc.bytes_out / wl,
                acc.bytes_in / wl,
                total_bytes / pkts if pkts else 0.0,
                (acc.iat_sum / acc.iat_n) / 1000.0 if acc.iat_n else 0.0,
                acc.tcp_pkts / pkts if pkts else 0.0,
                acc.udp_pkts / pkts if pkts else 0.0,
                acc.new_remote_ips / wl,
            )
        return FeatureVector(device_mac=mac, window_start=window_start,
                             window_len=wl, dims=dims)

    def closed_window_starts(self, mac: str, horizon_us: Optional[int] = None) -> list[int]:
        """Starts of all windows fully elapsed at horizon (default: max ts)."""
        horizon = self.max_ts if horizon_us is None else horizon_us
        n = horizon // self.window_len_us
        return [i * self.window_len_us for i in range(n)]

    def devices(self) -> set[str]:
        return set(self._devices)

    # -- maintenance ----------------------------------------------------------

    def evict_idle(self, now_us: int, idle_timeout_s: Optional[float] = None) -> int:
        timeout_us = int((idle_timeout_s if idle_timeout_s is not None else self.idle_timeout_s) * 1e6)
        stale = [k for k, rec in self.flows.items() if rec.last_ts < now_us - timeout_us]
        for k in stale:
            del self.flows[k]
        return len(stale)

    # -- import/export ----------------------------------------------------------

    def export_flows(self, path) -> int:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                n = 0
                for rec in self.flows.values():
                    fh.write(json.dumps(rec.to_json()) + "\n")
                    n += 1
            return n
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    def import_flows(self, path) -> int:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                n = 0
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = FlowRecord.from_json(json.loads(line))
                    self.flows[rec.key] = rec
                    self.max_ts = max(self.max_ts, rec.last_ts)
                    n += 1
            return n
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    def export_features(self, path, features) -> int:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                n = 0
                for fv in features:
                    fh.write(json.dumps(fv.to_json()) + "\n")
                    n += 1
            return n
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
