import json
import re
import random

import numpy as np
import pytest

from dada import profiler, simulator
from dada.flows import FEATURE_DIMS, N_DIMS, FeatureVector
from dada.profiler import (ClassMismatch, DimMismatch, InsufficientData,
                           ProfileStore, SIGMA_FLOOR, class_id_for,
                           export_profile, identify_device, import_profile,
                           learn_profile, merge_profiles, score)

MAC = "02:00:00:00:00:01"


def fv(dims, window_start=0):
    return FeatureVector(device_mac=MAC, window_start=window_start,
                         window_len=60.0, dims=tuple(dims))


def constant_history(n, value=5.0):
    return [fv([value] * N_DIMS, window_start=i * 60_000_000) for i in range(n)]


CORPUS_CLASSES = {
    "heartbeat": {"class": "heartbeat", "period_s": 2.0, "size": 120,
                  "jitter": 0.2,
                  "endpoint": {"ip": "203.0.113.10", "port": 443, "protocol": "tcp"}},
    "stream": {"class": "stream", "rate_bps": 40000, "pkt_size": 1200,
               "jitter": 0.2,
               "endpoint": {"ip": "203.0.113.20", "port": 443, "protocol": "tcp"}},
    "scanner": {"class": "scanner", "targets_per_s": 8, "subnet": "192.168.1.0/24",
                "size": 60},
}


# -- learn --------------------------------------------------------------------

def test_learn_identical_vectors_floors_sigma():
    p = learn_profile(constant_history(10), "class-a")
    assert np.allclose(p.dims, 5.0)
    assert np.all(p.dims_sigma == SIGMA_FLOOR)
    assert p.sample_count == 10


def test_learn_insufficient_data():
    with pytest.raises(InsufficientData):
        learn_profile(constant_history(5), "class-a")


def test_learn_recovers_generator_moments():
    rng = random.Random(42)
    mu_true, sigma_true = 100.0, 10.0
    n = 1000
    history = [fv([rng.gauss(mu_true, sigma_true)] * N_DIMS) for _ in range(n)]
    p = learn_profile(history, "class-g")
    tol = 3 * sigma_true / np.sqrt(n)
    assert np.all(np.abs(p.dims - mu_true) < tol)
    assert np.all(np.abs(p.dims_sigma - sigma_true) < 1.0)


# -- score ---------------------------------------------------------------------

def test_score_centroid_is_zero():
    p = learn_profile(constant_history(10), "c")
    r = score(fv([5.0] * N_DIMS), p)
    assert r.score == 0.0
    assert r.proposed_action == "none"
    assert r.offending_dims == []


def test_score_three_sigma_exact():
    rng = random.Random(1)
    history = [fv([rng.gauss(50, 5) for _ in range(N_DIMS)]) for _ in range(200)]
    p = learn_profile(history, "c")
    x = list(p.dims)
    x[3] = p.dims[3] + 3.0 * p.dims_sigma[3]
    r = score(fv(x), p)
    assert r.score == pytest.approx(3.0)
    assert r.offending_dims == [FEATURE_DIMS[3]]
    assert r.proposed_action == "rate_limit"


def test_score_flood_proposes_isolate():
    p = learn_profile(constant_history(20, value=1.0), "c")
    x = [1.0] * N_DIMS
    x[FEATURE_DIMS.index("pkts_out_rate")] = 1000.0
    r = score(fv(x), p)
    assert r.score > profiler.DEFAULT_ISOLATE_THRESHOLD
    assert r.proposed_action == "isolate"


def test_score_dim_mismatch():
    p = learn_profile(constant_history(10), "c")
    with pytest.raises(DimMismatch):
        score(FeatureVector(MAC, 0, 60.0, (1.0, 2.0)), p)


# -- identify ---------------------------------------------------------------

def test_identify_empty_library():
    assert identify_device(fv([1.0] * N_DIMS), []) == ("Unknown", 0.0)


def test_identify_single_profile_at_centroid():
    p = learn_profile(constant_history(10, value=3.0), "only")
    cid, conf = identify_device(fv([3.0] * N_DIMS), [p])
    assert cid == "only" and conf == 1.0


def test_identify_synthetic_corpus_accuracy():
    corpus = simulator.generate_corpus(CORPUS_CLASSES, windows_per_class=200, seed=424242)
    by_label: dict[str, list] = {}
    for label, vec in corpus:
        by_label.setdefault(label, []).append(vec)
    library = []
    holdout = []
    for label, vecs in sorted(by_label.items()):
        train, held = vecs[:100], vecs[100:200]
        library.append(learn_profile(train, label))
        holdout.extend((label, v) for v in held)
    correct = sum(identify_device(v, library)[0] == label for label, v in holdout)
    assert correct / len(holdout) >= 0.95


# -- export / merge ---------------------------------------------------------

def test_class_id_pseudonymous_and_stable():
    a = class_id_for("example.com", "https://example.com/models/cam-200")
    assert a == class_id_for("example.com", "https://example.com/models/cam-200")
    assert a != class_id_for("example.com", "https://example.com/models/hub-1")
    assert len(a) == 16


def test_export_strips_identity_and_gates_ips():
    p = learn_profile(constant_history(10), "c",
                      endpoints=[("203.0.113.9", "tcp", 443),
                                 ("cloud.example.com", "tcp", 443)])
    doc = export_profile(p)  # k gate 2: lone-support IP literal withheld
    hosts = [e["endpoint"] for e in doc["endpoints"]]
    assert hosts == ["cloud.example.com"]
    blob = json.dumps(doc)
    assert "mac" not in doc and "device_ip" not in doc
    assert not re.search(r"\b([0-9a-f]{2}:){5}[0-9a-f]{2}\b", blob, re.IGNORECASE)


def test_export_ip_with_support_passes_gate():
    p = learn_profile(constant_history(10), "c", endpoints=[("203.0.113.9", "tcp", 443)])
    p.endpoint_support[("203.0.113.9", "tcp", 443)] = 2
    doc = export_profile(p)
    assert [e["endpoint"] for e in doc["endpoints"]] == ["203.0.113.9"]


def test_merge_self_doubles_samples():
    p = learn_profile(constant_history(10, value=7.0), "c")
    m = merge_profiles(p, p)
    assert np.allclose(m.dims, p.dims)
    assert m.sample_count == 20


def test_merge_weighted_mean():
    a = learn_profile(constant_history(10, value=0.0), "c")
    b = learn_profile(constant_history(10, value=0.0), "c")
    a.dims = np.full(N_DIMS, 2.0)
    a.sample_count = 1
    b.dims = np.full(N_DIMS, 6.0)
    b.sample_count = 3
    m = merge_profiles(a, b)
    assert np.allclose(m.dims, (2.0 + 3 * 6.0) / 4)   # (a + 3b) / 4
    assert m.sample_count == 4


def test_merge_commutative():
    rng = random.Random(9)
    a = learn_profile([fv([rng.gauss(10, 2) for _ in range(N_DIMS)]) for _ in range(30)], "c")
    b = learn_profile([fv([rng.gauss(12, 3) for _ in range(N_DIMS)]) for _ in range(50)], "c")
    ab, ba = merge_profiles(a, b), merge_profiles(b, a)
    assert np.allclose(ab.dims, ba.dims)
    assert np.allclose(ab.dims_sigma, ba.dims_sigma)
    assert ab.sample_count == ba.sample_count


def test_merge_class_mismatch():
    a = learn_profile(constant_history(10), "c1")
    b = learn_profile(constant_history(10), "c2")
    with pytest.raises(ClassMismatch):
        merge_profiles(a, b)


def test_profile_store_roundtrip(tmp_path):
    p = learn_profile(constant_history(12, value=4.0), "classx",
                      endpoints=[("cloud.example.com", "tcp", 443)])
    store = ProfileStore(tmp_path)
    store.save(p)
    loaded = store.load("classx")
    assert loaded is not None
    assert np.allclose(loaded.dims, p.dims)
    assert loaded.sample_count == p.sample_count
    assert store.load_all()[0].class_id == "classx"
    # round trip of the exported document is identity
    doc = export_profile(loaded)
    assert export_profile(import_profile(doc)) == doc
