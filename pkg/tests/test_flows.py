import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dada.datapath import PacketEvent, Verdict
from dada.flows import FEATURE_DIMS, FlowMonitor, WindowNotClosed

MAC = "02:00:00:00:00:01"
ACCEPT = Verdict("Accept", "RuleAccept")
DROP = Verdict("Drop", "DefaultDeny")


def pkt(ts, dst_ip="203.0.113.10", proto="tcp", dst_port=443, length=100,
        direction="from-device"):
    return PacketEvent(ts=ts, src_mac=MAC, dst_mac="gw", src_ip="192.168.1.10",
                       dst_ip=dst_ip, protocol=proto, src_port=40000,
                       dst_port=dst_port, length=length, direction=direction)


def test_first_packet_creates_flow():
    mon = FlowMonitor()
    mon.ingest(pkt(1000, length=240), ACCEPT)
    rec = next(iter(mon.flows.values()))
    assert rec.packets == 1 and rec.bytes == 240
    assert rec.iat_count == 0
    assert rec.first_ts == rec.last_ts == 1000


def test_constant_spacing_zero_variance():
    mon = FlowMonitor()
    for i in range(11):
        mon.ingest(pkt(i * 10_000), ACCEPT)  # exactly 10 ms apart
    rec = next(iter(mon.flows.values()))
    assert rec.iat_count == 10
    assert rec.iat_mean == pytest.approx(10_000.0)
    assert rec.iat_variance == pytest.approx(0.0, abs=1e-9)
    assert rec.iat_min == rec.iat_max == 10_000.0


def test_drops_excluded_from_flow_stats():
    mon = FlowMonitor()
    mon.ingest(pkt(0), ACCEPT)
    mon.ingest(pkt(1), DROP)
    rec = next(iter(mon.flows.values()))
    assert rec.packets == 1
    assert mon.drop_counts[MAC] == 1


def test_byte_totals_against_two_pass_oracle():
    rng = random.Random(3)
    mon = FlowMonitor()
    naive: dict[tuple, list[int]] = {}
    t = 0
    for _ in range(1000):
        t += rng.randint(1, 5000)
        dst = f"203.0.113.{rng.randint(1, 5)}"
        port = rng.choice((443, 8080))
        length = rng.randint(60, 1500)
        e = pkt(t, dst_ip=dst, dst_port=port, length=length)
        mon.ingest(e, ACCEPT)
        naive.setdefault((dst, port), []).append(length)
    for key, lengths in naive.items():
        rec = next(r for r in mon.flows.values()
                   if r.key.remote_ip == key[0] and r.key.remote_port == key[1])
        assert rec.bytes == sum(lengths)
        assert rec.packets == len(lengths)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=10_000_000), min_size=3, max_size=200))
def test_streaming_variance_matches_two_pass(gaps):
    mon = FlowMonitor()
    t = 0
    ts_list = []
    for g in gaps:
        t += g
        ts_list.append(t)
        mon.ingest(pkt(t), ACCEPT)
    rec = next(iter(mon.flows.values()))
    iats = [b - a for a, b in zip(ts_list, ts_list[1:])]
    want = statistics.variance(iats)
    got = rec.iat_variance
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


# -- windows ----------------------------------------------------------------

def test_window_not_closed():
    mon = FlowMonitor(window_len_s=60)
    mon.ingest(pkt(5_000_000), ACCEPT)
    with pytest.raises(WindowNotClosed):
        mon.window_features(MAC, 0)


def test_empty_window_zero_vector():
    mon = FlowMonitor(window_len_s=60)
    mon.max_ts = 60_000_000
    fv = mon.window_features(MAC, 0)
    assert fv.dims == (0.0,) * len(FEATURE_DIMS)


def test_heartbeat_window_features():
    mon = FlowMonitor(window_len_s=60)
    for i in range(60):
        mon.ingest(pkt(i * 1_000_000, length=100), ACCEPT)  # 1 pkt/s, 100 B
    mon.max_ts = 60_000_000
    fv = mon.window_features(MAC, 0)
    assert fv["pkts_out_rate"] == pytest.approx(1.0)
    assert fv["mean_pkt_size"] == pytest.approx(100.0)
    assert fv["bytes_out_rate"] == pytest.approx(100.0)
    assert fv["tcp_share"] == pytest.approx(1.0)
    assert fv["udp_share"] == pytest.approx(0.0)
    assert fv["flow_count"] == 1.0
    assert fv["mean_inter_arrival_ms"] == pytest.approx(1000.0)


def test_scanner_window_features():
    mon = FlowMonitor(window_len_s=60)
    for i in range(50):
        mon.ingest(pkt(i * 1_000_000, dst_ip=f"192.168.1.{i + 1}", dst_port=22,
                       length=60), ACCEPT)
    mon.max_ts = 60_000_000
    fv = mon.window_features(MAC, 0)
    assert fv["unique_remote_ips"] == 50.0
    assert fv["new_destination_rate"] == pytest.approx(50 / 60)
    assert fv["new_flow_count"] == 50.0


def test_feature_determinism():
    def run():
        mon = FlowMonitor(window_len_s=10)
        rng = random.Random(11)
        t = 0
        for _ in range(500):
            t += rng.randint(1, 100_000)
            mon.ingest(pkt(t, dst_ip=f"203.0.113.{rng.randint(1, 9)}",
                           length=rng.randint(60, 1400)), ACCEPT)
        mon.max_ts += 10_000_000
        return [mon.window_features(MAC, s).dims for s in mon.closed_window_starts(MAC)]
    assert run() == run()


def test_byte_conservation():
    rng = random.Random(21)
    mon = FlowMonitor()
    total = 0
    t = 0
    for _ in range(800):
        t += rng.randint(1, 9000)
        length = rng.randint(60, 1500)
        accepted = rng.random() < 0.8
        mon.ingest(pkt(t, dst_ip=f"10.0.0.{rng.randint(1, 30)}", length=length),
                   ACCEPT if accepted else DROP)
        if accepted:
            total += length
    assert sum(r.bytes for r in mon.flows.values()) == total


# -- eviction and export -----------------------------------------------------

def test_evict_idle():
    mon = FlowMonitor()
    mon.ingest(pkt(0), ACCEPT)
    mon.ingest(pkt(0, dst_ip="203.0.113.99"), ACCEPT)
    assert mon.evict_idle(now_us=100, idle_timeout_s=300) == 0
    assert mon.evict_idle(now_us=600_000_000, idle_timeout_s=300) == 2
    assert mon.flows == {}


def test_evicted_flow_features_already_emitted():
    mon = FlowMonitor(window_len_s=60)
    for i in range(60):
        mon.ingest(pkt(i * 1_000_000, length=100), ACCEPT)
    mon.max_ts = 60_000_000
    before = mon.window_features(MAC, 0)
    mon.evict_idle(now_us=400_000_000)
    after = mon.window_features(MAC, 0)
    assert after.dims == before.dims


def test_export_import_roundtrip(tmp_path):
    rng = random.Random(31)
    mon = FlowMonitor()
    t = 0
    for _ in range(200):
        t += rng.randint(1, 5000)
        mon.ingest(pkt(t, dst_ip=f"203.0.113.{rng.randint(1, 8)}",
                       length=rng.randint(60, 1000)), ACCEPT)
    path = tmp_path / "flows.jsonl"
    n = mon.export_flows(path)
    assert n == len(mon.flows)

    mon2 = FlowMonitor()
    assert mon2.import_flows(path) == n
    assert sum(r.bytes for r in mon2.flows.values()) == sum(r.bytes for r in mon.flows.values())
    assert sum(r.packets for r in mon2.flows.values()) == sum(r.packets for r in mon.flows.values())
    assert set(mon2.flows) == set(mon.flows)


def test_export_empty(tmp_path):
    assert FlowMonitor().export_flows(tmp_path / "empty.jsonl") == 0
