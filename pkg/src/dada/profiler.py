"""Behavioural device profiles: centroid + tolerance bands over the
12-dimensional windowed features, anomaly scoring, nearest-centroid
identification, and pseudonymous export/merge for cross-home sharing.

Profiles are keyed by a truncated hash of (manufacturer authority, model
URI) and never carry MACs or device IPs.  Exported endpoint IP/CIDR
entries pass a k-support gate (default k=2): an IP literal leaves the
home only once at least k contributing profiles observed it.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flows import FEATURE_DIMS, N_DIMS, FeatureVector

SIGMA_FLOOR = 1e-6
DEFAULT_ALERT_THRESHOLD = 3.0
DEFAULT_ISOLATE_THRESHOLD = 6.0
DEFAULT_IDENTIFY_GATE = 4.0
DEFAULT_MIN_WINDOWS = 10
DEFAULT_K_GATE = 2

_IP_LITERAL = re.compile(r"^\d{1,3}(\.\d{1,3}){3}(/\d{1,2})?$")


class InsufficientData(Exception):
    pass


class DimMismatch(Exception):
    pass


class ClassMismatch(Exception):
    pass


def class_id_for(manufacturer: str, model: str) -> str:
    """Pseudonymous device-class identifier."""
    digest = hashlib.sha256(f"{manufacturer}|{model}".encode()).hexdigest()
    return digest[:16]


@dataclass
class DeviceProfile:
    class_id: str
    dims: np.ndarray                 # centroid means, shape (12,)
    dims_sigma: np.ndarray           # per-dim stddev, floored at SIGMA_FLOOR
    sample_count: int
    endpoint_set: set[tuple] = field(default_factory=set)  # (host-or-cidr, protocol, port)
    endpoint_support: dict[tuple, int] = field(default_factory=dict)
    version: int = 1


@dataclass
class AnomalyReport:
    mac: str
    window_start: int
    score: float                     # max over dims of |x - mu| / sigma
    offending_dims: list[str]
    proposed_action: str             # none | rate_limit | isolate


def learn_profile(history: list[FeatureVector], class_id: str,
                  endpoints=(), min_windows: int = DEFAULT_MIN_WINDOWS) -> DeviceProfile:
    if len(history) < min_windows:
        raise InsufficientData(f"{len(history)} windows < required {min_windows}")
    x = np.array([fv.dims for fv in history], dtype=np.float64)
    mu = x.mean(axis=0)
    sigma = np.maximum(x.std(axis=0), SIGMA_FLOOR)
    eps = set(tuple(e) for e in endpoints)
    return DeviceProfile(
        class_id=class_id,
        dims=mu,
        dims_sigma=sigma,
        sample_count=len(history),
        endpoint_set=eps,
        endpoint_support={e: 1 for e in eps},
        version=1,
    )


def score(x: FeatureVector, p: DeviceProfile,
          alert_threshold: float = DEFAULT_ALERT_THRESHOLD,
          isolate_threshold: float = DEFAULT_ISOLATE_THRESHOLD) -> AnomalyReport:
    if len(x.dims) != len(p.dims):
        raise DimMismatch(f"{len(x.dims)} != {len(p.dims)}")
    z = np.abs(np.asarray(x.dims) - p.dims) / p.dims_sigma
    top = float(z.max())
    offending = [FEATURE_DIMS[i] for i in np.flatnonzero(z >= alert_threshold)]
    if top >= isolate_threshold:
        action = "isolate"
    elif top >= alert_threshold:
        action = "rate_limit"
    else:
        action = "none"
    return AnomalyReport(mac=x.device_mac, window_start=x.window_start,
                         score=top, offending_dims=offending, proposed_action=action)


def identify_device(x: FeatureVector, library: list[DeviceProfile],
                    gate: float = DEFAULT_IDENTIFY_GATE) -> tuple[str, float]:
    """Nearest centroid under sigma-normalized distance (RMS over dims so
    the gate is dimension-count independent).  Returns ("Unknown", 0.0)
    when the library is empty or nothing falls within the gate."""
    if not library:
        return "Unknown", 0.0
    xs = np.asarray(x.dims, dtype=np.float64)
    dists = []
    for p in library:
        if len(p.dims) != len(xs):
            raise DimMismatch(f"{len(p.dims)} != {len(xs)}")
        z = (xs - p.dims) / p.dims_sigma
        dists.append(float(np.sqrt(np.mean(z * z))))
    order = np.argsort(dists)
    best = dists[order[0]]
    if best > gate:
        return "Unknown", 0.0
    within = [d for d in dists if d <= gate]
    if len(within) < 2:
        return library[order[0]].class_id, 1.0
    second = dists[order[1]]
    confidence = 1.0 - best / second if second > 0 else 0.0
    return library[order[0]].class_id, confidence


# ---------------------------------------------------------------------------
# sharing

def export_profile(p: DeviceProfile, k_gate: int = DEFAULT_K_GATE) -> dict:
    """Shareable pseudonymous document.  No MAC / device-IP fields;
    IP-literal endpoints require support from >= k_gate contributing
    profiles, hostname endpoints are always exported."""
    endpoints = []
    for ep in sorted(p.endpoint_set):
        host = str(ep[0])
        if _IP_LITERAL.match(host) and p.endpoint_support.get(ep, 0) < k_gate:
            continue
        endpoints.append({"endpoint": host, "protocol": ep[1], "port": ep[2],
                          "support": p.endpoint_support.get(ep, 1)})
    return {
        "schema": "dada-profile/1",
        "class_id": p.class_id,
        "version": p.version,
        "sample_count": p.sample_count,
        "dims": {name: float(v) for name, v in zip(FEATURE_DIMS, p.dims)},
        "dims_sigma": {name: float(v) for name, v in zip(FEATURE_DIMS, p.dims_sigma)},
        "endpoints": endpoints,
    }


def import_profile(doc: dict) -> DeviceProfile:
    if doc.get("schema") != "dada-profile/1":
        raise ValueError(f"unknown profile schema {doc.get('schema')!r}")
    dims = np.array([doc["dims"][name] for name in FEATURE_DIMS])
    sigma = np.array([doc["dims_sigma"][name] for name in FEATURE_DIMS])
    eps = {(e["endpoint"], e["protocol"], e["port"]) for e in doc.get("endpoints", [])}
    support = {(e["endpoint"], e["protocol"], e["port"]): int(e.get("support", 1))
               for e in doc.get("endpoints", [])}
    return DeviceProfile(class_id=doc["class_id"], dims=dims, dims_sigma=sigma,
                         sample_count=int(doc["sample_count"]), endpoint_set=eps,
                         endpoint_support=support, version=int(doc.get("version", 1)))


def merge_profiles(local: DeviceProfile, shared: DeviceProfile) -> DeviceProfile:
    """Sample-count-weighted centroid; pooled variance; endpoint support
    summed.  Commutative in centroid and sample_count."""
    if local.class_id != shared.class_id:
        raise ClassMismatch(f"{local.class_id} != {shared.class_id}")
    if len(local.dims) != len(shared.dims):
        raise DimMismatch(f"{len(local.dims)} != {len(shared.dims)}")
    na, nb = local.sample_count, shared.sample_count
    n = na + nb
    mu = (na * local.dims + nb * shared.dims) / n
    # pooled second moment about the combined mean
    second = (na * (local.dims_sigma ** 2 + local.dims ** 2)
              + nb * (shared.dims_sigma ** 2 + shared.dims ** 2)) / n
    var = np.maximum(second - mu ** 2, 0.0)
    support: dict[tuple, int] = {}
    for p in (local, shared):
        for ep in p.endpoint_set:
            support[ep] = support.get(ep, 0) + p.endpoint_support.get(ep, 1)
    return DeviceProfile(
        class_id=local.class_id,
        dims=mu,
        dims_sigma=np.maximum(np.sqrt(var), SIGMA_FLOOR),
        sample_count=n,
        endpoint_set=set(support),
        endpoint_support=support,
        version=max(local.version, shared.version) + 1,
    )


# ---------------------------------------------------------------------------
# file-backed profile store

class ProfileStore:
    """JSON documents, one per class id, under a directory."""

    def __init__(self, directory):
        from pathlib import Path
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, class_id: str):
        return self.directory / f"{class_id}.json"

    def save(self, p: DeviceProfile, k_gate: int = DEFAULT_K_GATE) -> None:
        doc = export_profile(p, k_gate=k_gate)
        blob = json.dumps(doc, sort_keys=True, indent=2)
        self.path_for(p.class_id).write_text(blob, encoding="utf-8")

    def load(self, class_id: str) -> Optional[DeviceProfile]:
        path = self.path_for(class_id)
        if not path.exists():
            return None
        return import_profile(json.loads(path.read_text(encoding="utf-8")))

    def load_all(self) -> list[DeviceProfile]:
        return [import_profile(json.loads(f.read_text(encoding="utf-8")))
                for f in sorted(self.directory.glob("*.json"))]
