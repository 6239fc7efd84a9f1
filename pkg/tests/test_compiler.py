import random

import pytest

from dada import compiler
from dada.compiler import (ContextMismatch, DeviceMismatch, PacketHeader,
                           compile, diff_rulesets, lookup, resolve_abstraction)
from dada.mud import Ace, AccessControlList, MatchCriteria, MudProfile, PortRange
from dada.netcontext import DeviceRecord

from helpers import mud_walk, random_context, random_packet_header, random_profile


def test_resolve_local_networks(ctx, camera_device):
    m = MatchCriteria(local_networks=True)
    ips, warnings = resolve_abstraction(m, ctx, camera_device)
    assert ips == {"192.168.1.0/24"}
    assert warnings == []


def test_resolve_dns_name(ctx, camera_device):
    m = MatchCriteria(dns_name="cloud.example.com")
    ips, _ = resolve_abstraction(m, ctx, camera_device)
    assert ips == {"203.0.113.10", "203.0.113.11"}


def test_resolve_same_manufacturer_no_peers(ctx):
    loner = ctx.device_by_mac("00:aa:bb:cc:00:05")
    ips, warnings = resolve_abstraction(MatchCriteria(same_manufacturer=True), ctx, loner)
    assert ips == set()
    assert [w.code for w in warnings] == ["NoPeersWarning"]


def test_resolve_unresolvable_name_warns(ctx, camera_device):
    ips, warnings = resolve_abstraction(MatchCriteria(dns_name="nosuch.example"), ctx, camera_device)
    assert ips == set()
    assert [w.code for w in warnings] == ["UnresolvedName"]


# -- compile -------------------------------------------------------------------

def test_compile_camera_four_rules(camera, ctx, camera_device):
    # hand expansion: dns ace -> 2 IPs, my-controller -> 1 IP,
    # same-manufacturer -> 1 peer (the hub at .11)
    rs, warnings = compile(camera, ctx, camera_device)
    assert warnings == []
    assert len(rs.rules) == 4
    assert rs.default_verdict == "drop"
    assert [r.priority for r in rs.rules] == [0, 1, 2, 3]
    by_prov = {}
    for r in rs.rules:
        by_prov.setdefault(r.provenance, []).append(r)
    assert sorted(ip for r in by_prov["from-camera/cloud-upload"] for ip in r.remote_ips) \
        == ["203.0.113.10", "203.0.113.11"]
    assert by_prov["from-camera/dns-to-controller"][0].remote_ips == ("192.168.1.5",)
    assert by_prov["from-camera/manufacturer-sync"][0].remote_ips == ("192.168.1.11",)
    assert by_prov["from-camera/cloud-upload"][0].verdict_kind == "accept_rate_limited"


def test_compile_empty_profile_default_drop(ctx, camera_device):
    p = MudProfile(mud_url="https://x", mud_version=1, last_update="", cache_validity=48,
                   is_supported=True, system_info="")
    rs, _ = compile(p, ctx, camera_device)
    assert rs.rules == []
    assert rs.default_verdict == "drop"


def test_compile_unresolvable_omits_rule(camera, ctx, camera_device):
    camera.acls["from-camera"].aces[0].matches.dns_name = "nosuch.example"
    rs, warnings = compile(camera, ctx, camera_device)
    assert all(r.provenance != "from-camera/cloud-upload" for r in rs.rules)
    assert any(w.code == "UnresolvedName" for w in warnings)


def test_compile_unknown_device_raises(camera, ctx):
    ghost = DeviceRecord(mac="ff:ff:ff:ff:ff:ff", ipv4="192.168.1.99")
    with pytest.raises(ContextMismatch):
        compile(camera, ctx, ghost)


def test_compile_deterministic(camera, ctx, camera_device):
    a, _ = compile(camera, ctx, camera_device)
    b, _ = compile(camera, ctx, camera_device)
    assert [r.canonical_key() for r in a.rules] == [r.canonical_key() for r in b.rules]
    assert [r.priority for r in a.rules] == [r.priority for r in b.rules]


# -- lookup -----------------------------------------------------------------

def camera_ruleset(camera, ctx, camera_device):
    rs, _ = compile(camera, ctx, camera_device)
    return rs


def test_lookup_cloud_accept_rate(camera, ctx, camera_device):
    rs = camera_ruleset(camera, ctx, camera_device)
    res = lookup(rs, PacketHeader(camera_device.mac, "from-device", "tcp",
                                  "203.0.113.10", 443, 50000))
    assert res.action == "accept"
    assert res.rate.max_bytes_per_second == 50000
    assert res.provenance == "from-camera/cloud-upload"


def test_lookup_default_deny(camera, ctx, camera_device):
    rs = camera_ruleset(camera, ctx, camera_device)
    res = lookup(rs, PacketHeader(camera_device.mac, "from-device", "tcp",
                                  "8.8.8.8", 80, 50000))
    assert res.action == "drop"
    assert res.provenance == "default"


def test_lookup_controller_dns(camera, ctx, camera_device):
    rs = camera_ruleset(camera, ctx, camera_device)
    res = lookup(rs, PacketHeader(camera_device.mac, "from-device", "udp",
                                  "192.168.1.5", 53, 40000))
    assert res.action == "accept"
    assert res.provenance == "from-camera/dns-to-controller"


def test_lookup_wrong_device_raises(camera, ctx, camera_device):
    rs = camera_ruleset(camera, ctx, camera_device)
    with pytest.raises(DeviceMismatch):
        lookup(rs, PacketHeader("de:ad:be:ef:00:00", "from-device", "tcp", "1.2.3.4"))


# -- diff ---------------------------------------------------------------------

def test_diff_identity(camera, ctx, camera_device):
    rs = camera_ruleset(camera, ctx, camera_device)
    d = diff_rulesets(rs, rs)
    assert d.added == [] and d.removed == []


def test_diff_one_added(camera, ctx, camera_device):
    old = camera_ruleset(camera, ctx, camera_device)
    camera.acls["from-camera"].aces.append(
        Ace(name="ntp", matches=MatchCriteria(protocol="udp", dst_port=PortRange(123, 123),
                                              local_networks=True), action="accept"))
    new = camera_ruleset(camera, ctx, camera_device)
    d = diff_rulesets(old, new)
    assert len(d.added) == 1 and len(d.removed) == 0


def test_diff_verdict_change_is_replace(camera, ctx, camera_device):
    old = camera_ruleset(camera, ctx, camera_device)
    camera.acls["from-camera"].aces[2].action = "drop"
    new = camera_ruleset(camera, ctx, camera_device)
    d = diff_rulesets(old, new)
    assert len(d.added) == 1 and len(d.removed) == 1


# -- oracle equivalence and monotonicity -----------------------------------------

def test_oracle_equivalence_random():
    """Compiled lookup must agree with the direct MUD walk on every packet."""
    rng = random.Random(2024)
    for trial in range(10):
        ctx = random_context(rng)
        device = rng.choice(ctx.devices)
        profile = random_profile(rng, device.mud_url)
        rs, _ = compile(profile, ctx, device)
        for _ in range(2000):
            pkt = random_packet_header(rng, device)
            got = lookup(rs, pkt).action
            want = mud_walk(profile, ctx, device, pkt)
            assert got == want, f"trial {trial}: {pkt} -> {got}, oracle {want}"


def test_monotonicity_adding_accept_ace():
    """An extra accept ACE with a fresh match space never flips an accept
    to a drop."""
    rng = random.Random(77)
    ctx = random_context(rng)
    device = ctx.devices[0]
    profile = random_profile(rng, device.mud_url)
    rs_before, _ = compile(profile, ctx, device)
    packets = [random_packet_header(rng, device) for _ in range(2000)]
    accepted = [p for p in packets if lookup(rs_before, p).action == "accept"]

    extra = Ace(name="extra-accept",
                matches=MatchCriteria(protocol="tcp", dst_port=PortRange(12345, 12345),
                                      dns_name="cloud.acme.example"),
                action="accept")
    acl = profile.acls.get("from-dev")
    if acl is None:
        acl = AccessControlList("from-dev", "ipv4", [])
        profile.acls["from-dev"] = acl
        profile.from_device_acls.append("from-dev")
    acl.aces.append(extra)
    rs_after, _ = compile(profile, ctx, device)
    for p in accepted:
        assert lookup(rs_after, p).action == "accept"
