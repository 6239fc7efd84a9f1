"""Shared test machinery: a direct MUD-walking interpreter (the oracle the
compiled rule path is checked against) and seeded generators for random
profiles, contexts and packet headers.

The oracle deliberately never touches the compiler: it resolves endpoint
abstractions on the fly per packet and walks ACEs in document order.
"""

from __future__ import annotations

import ipaddress
import random

from dada import mud
from dada.compiler import PacketHeader
from dada.mud import (Ace, AccessControlList, MatchCriteria, MudProfile,
                      PortRange, RateSpec)
from dada.netcontext import DeviceRecord, NetworkContext

FIXTURES = __import__("pathlib").Path(__file__).resolve().parent.parent / "fixtures"
SCENARIOS = FIXTURES.parent / "scenarios"


def camera_profile() -> MudProfile:
    return mud.load_mud_file(FIXTURES / "mud" / "camera.mud.json")


def fixture_context() -> NetworkContext:
    from dada.netcontext import load_context
    return load_context(FIXTURES / "context.json")


# ---------------------------------------------------------------------------
# direct MUD interpreter (oracle)

def _ip_in(ip: str, cidrs: set[str]) -> bool:
    addr = ipaddress.ip_address(ip)
    for c in cidrs:
        if addr in ipaddress.ip_network(c, strict=False):
            return True
    return False


def _resolve(m: MatchCriteria, ctx: NetworkContext, device: DeviceRecord):
    """On-the-fly endpoint resolution; None means 'any remote host'."""
    if m.dns_name is not None:
        return set(ctx.dns_bindings.get(m.dns_name, ()))
    if m.local_networks:
        return set(ctx.local_subnets)
    if m.same_manufacturer:
        return {d.ipv4 for d in ctx.devices
                if d.mac != device.mac and d.manufacturer
                and d.manufacturer == device.manufacturer}
    if m.my_controller:
        return set(ctx.my_controller_bindings.get(device.mud_url, ()))
    if m.controller_class is not None:
        return set(device.controllers.get(m.controller_class, ()))
    if m.manufacturer is not None:
        return {d.ipv4 for d in ctx.devices if d.manufacturer == m.manufacturer}
    if m.model is not None:
        return {d.ipv4 for d in ctx.devices if d.model == m.model}
    return None


def _port_ok(rng: PortRange | None, port: int | None) -> bool:
    if rng is None:
        return True
    return port is not None and rng.low <= port <= rng.high


def mud_walk(profile: MudProfile, ctx: NetworkContext, device: DeviceRecord,
             pkt: PacketHeader) -> str:
    """Returns "accept" or "drop" by walking the MUD document directly."""
    acl_names = (profile.from_device_acls if pkt.direction == "from-device"
                 else profile.to_device_acls)
    for acl_name in acl_names:
        for ace in profile.acls[acl_name].aces:
            m = ace.matches
            if m.protocol is not None and m.protocol != pkt.protocol:
                continue
            if pkt.direction == "from-device":
                remote_rng, local_rng = m.dst_port, m.src_port
            else:
                remote_rng, local_rng = m.src_port, m.dst_port
            if not _port_ok(remote_rng, pkt.remote_port):
                continue
            if not _port_ok(local_rng, pkt.local_port):
                continue
            endpoints = _resolve(m, ctx, device)
            if endpoints is not None and not _ip_in(pkt.remote_ip, endpoints):
                continue
            return ace.action
    return "drop"


# ---------------------------------------------------------------------------
# seeded generators

MANUFACTURERS = ("acme.example", "hubco.example", "camco.example")
HOSTNAMES = ("cloud.acme.example", "api.hubco.example", "upd.camco.example")


def random_context(rng: random.Random, n_devices: int = 5) -> NetworkContext:
    devices = []
    for i in range(n_devices):
        manu = rng.choice(MANUFACTURERS)
        devices.append(DeviceRecord(
            mac=f"02:00:00:00:00:{i + 1:02x}",
            ipv4=f"192.168.1.{i + 10}",
            manufacturer=manu,
            model=f"https://{manu}/models/m{rng.randint(1, 3)}",
            mud_url=f"https://{manu}/dev{i}.mud.json",
            controllers={"urn:ietf:params:mud:dns": {f"192.168.1.{rng.randint(2, 9)}"}},
        ))
    dns = {h: {f"203.0.113.{rng.randint(1, 100)}",
               f"203.0.113.{rng.randint(101, 200)}"}
           for h in HOSTNAMES if rng.random() < 0.8}
    my_ctl = {d.mud_url: {f"192.168.1.{rng.randint(2, 9)}"}
              for d in devices if rng.random() < 0.7}
    return NetworkContext(
        devices=devices,
        dns_bindings=dns,
        local_subnets=["192.168.1.0/24"],
        gateway_ip="192.168.1.1",
        my_controller_bindings=my_ctl,
    )


def _random_matches(rng: random.Random) -> MatchCriteria:
    m = MatchCriteria()
    proto = rng.choice((None, "tcp", "tcp", "udp", "icmp"))
    m.protocol = proto
    if proto in ("tcp", "udp"):
        if rng.random() < 0.7:
            p = rng.choice((53, 80, 443, 8443, 8888))
            m.dst_port = PortRange(p, p)
        if rng.random() < 0.2:
            lo = rng.randint(1024, 60000)
            m.src_port = PortRange(lo, min(65535, lo + rng.randint(0, 1000)))
    pick = rng.random()
    if pick < 0.25:
        m.dns_name = rng.choice(HOSTNAMES)
    elif pick < 0.40:
        m.local_networks = True
    elif pick < 0.55:
        m.same_manufacturer = True
    elif pick < 0.65:
        m.my_controller = True
    elif pick < 0.75:
        m.manufacturer = rng.choice(MANUFACTURERS)
    elif pick < 0.85:
        m.model = f"https://{rng.choice(MANUFACTURERS)}/models/m{rng.randint(1, 3)}"
    # else: no abstraction, matches any remote
    return m


def random_profile(rng: random.Random, mud_url: str, max_aces: int = 6) -> MudProfile:
    aces = []
    for i in range(rng.randint(0, max_aces)):
        action = "accept" if rng.random() < 0.8 else "drop"
        rate = None
        if action == "accept" and rng.random() < 0.3:
            rate = RateSpec(max_bytes_per_second=rng.randint(1000, 100000),
                            burst_bytes=rng.randint(0, 20000))
        aces.append(Ace(name=f"ace-{i}", matches=_random_matches(rng),
                        action=action, rate_limit=rate))
    to_aces = []
    for i in range(rng.randint(0, 3)):
        to_aces.append(Ace(name=f"to-ace-{i}", matches=_random_matches(rng),
                           action="accept"))
    acls = {}
    from_names, to_names = [], []
    if aces:
        acls["from-dev"] = AccessControlList("from-dev", "ipv4", aces)
        from_names = ["from-dev"]
    if to_aces:
        acls["to-dev"] = AccessControlList("to-dev", "ipv4", to_aces)
        to_names = ["to-dev"]
    return MudProfile(
        mud_url=mud_url, mud_version=1, last_update="2026-01-05T10:00:00+00:00",
        cache_validity=48, is_supported=True, system_info="generated",
        from_device_acls=from_names, to_device_acls=to_names, acls=acls,
    )


def random_packet_header(rng: random.Random, device: DeviceRecord) -> PacketHeader:
    # mix of context-relevant and arbitrary remotes so both accept and
    # default-deny paths are exercised
    pick = rng.random()
    if pick < 0.4:
        remote = f"203.0.113.{rng.randint(1, 200)}"
    elif pick < 0.7:
        remote = f"192.168.1.{rng.randint(1, 254)}"
    else:
        remote = f"{rng.randint(1, 223)}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}"
    proto = rng.choice((None, "tcp", "tcp", "udp", "icmp"))
    remote_port = local_port = None
    if proto in ("tcp", "udp"):
        remote_port = rng.choice((53, 80, 443, 8443, 8888, rng.randint(1, 65535)))
        local_port = rng.randint(1024, 65535)
    return PacketHeader(
        device_mac=device.mac,
        direction=rng.choice(("from-device", "to-device")),
        protocol=proto,
        remote_ip=remote,
        remote_port=remote_port,
        local_port=local_port,
    )
