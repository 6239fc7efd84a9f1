"""Compile MUD profiles into per-device ordered five-tuple rule sets.

Endpoint abstractions (dns-name, controller, my-controller, local-networks,
same-manufacturer, manufacturer, model) are resolved against a static
``NetworkContext``.  The result is an ordered ``RuleSet`` with first-match
semantics and an unconditional default-deny tail.

``lookup`` is the stateless reference interpreter over a compiled rule set;
rate limits are carried on the verdict but evaluated by the datapath.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from typing import Optional

from .mud import Ace, MatchCriteria, MudProfile, PortRange, RateSpec
from .netcontext import DeviceRecord, NetworkContext


class ContextMismatch(Exception):
    pass


class DeviceMismatch(Exception):
    pass


@dataclass
class CompileWarning:
    code: str    # UnresolvedName | NoPeersWarning | NoController | ...
    detail: str


def ip_to_int(ip: str) -> int:
    return struct.unpack("!I", socket.inet_aton(ip))[0]


def _parse_cidr(cidr: str) -> tuple[int, int]:
    """Return (network_int, mask_int) for 'a.b.c.d' or 'a.b.c.d/p'."""
    if "/" in cidr:
        base, prefix = cidr.split("/")
        p = int(prefix)
    else:
        base, p = cidr, 32
    mask = 0 if p == 0 else (0xFFFFFFFF << (32 - p)) & 0xFFFFFFFF
    return ip_to_int(base) & mask, mask


@dataclass
class ConcreteRule:
    priority: int
    direction: str                      # "from-device" | "to-device"
    remote_ips: tuple[str, ...]         # ipv4 addresses or CIDRs, non-empty
    protocol: Optional[str]
    remote_port: Optional[PortRange]
    local_port: Optional[PortRange]
    verdict_kind: str                   # accept | accept_rate_limited | drop | log
    rate: Optional[RateSpec]
    provenance: str                     # "<acl>/<ace>"
    _nets: list[tuple[int, int]] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if not self.remote_ips:
            raise ValueError("ConcreteRule.remote_ips must be non-empty")
        self._nets = [_parse_cidr(c) for c in self.remote_ips]

    def matches(self, direction: str, proto: Optional[str], remote_ip_int: int,
                remote_port: Optional[int], local_port: Optional[int]) -> bool:
        if direction != self.direction:
            return False
        if self.protocol is not None and proto != self.protocol:
            return False
        if self.remote_port is not None:
            if remote_port is None or not (self.remote_port.low <= remote_port <= self.remote_port.high):
                return False
        if self.local_port is not None:
            if local_port is None or not (self.local_port.low <= local_port <= self.local_port.high):
                return False
        for net, mask in self._nets:
            if remote_ip_int & mask == net:
                return True
        return False

    def canonical_key(self) -> tuple:
        """Rule identity for diffing: everything except priority."""
        rate = None
        if self.rate is not None:
            rate = (self.rate.max_bytes_per_second, self.rate.max_packets_per_second,
                    self.rate.burst_bytes)
        rp = (self.remote_port.low, self.remote_port.high) if self.remote_port else None
        lp = (self.local_port.low, self.local_port.high) if self.local_port else None
        return (self.direction, tuple(sorted(self.remote_ips)), self.protocol,
                rp, lp, self.verdict_kind, rate, self.provenance)

    def to_json(self) -> dict:
        return {
            "priority": self.priority,
            "direction": self.direction,
            "remote_ips": list(self.remote_ips),
            "protocol": self.protocol,
            "remote_port": [self.remote_port.low, self.remote_port.high] if self.remote_port else None,
            "local_port": [self.local_port.low, self.local_port.high] if self.local_port else None,
            "verdict_kind": self.verdict_kind,
            "rate": None if self.rate is None else {
                "max_bytes_per_second": self.rate.max_bytes_per_second,
                "max_packets_per_second": self.rate.max_packets_per_second,
                "burst_bytes": self.rate.burst_bytes,
            },
            "provenance": self.provenance,
        }


@dataclass
class RuleSet:
    device_mac: str
    rules: list[ConcreteRule] = field(default_factory=list)
    default_verdict: str = "drop"
    generation: int = 0


@dataclass
class PacketHeader:
    """Device-relative view of a packet for rule lookup."""
    device_mac: str
    direction: str                # "from-device" | "to-device"
    protocol: Optional[str]
    remote_ip: str
    remote_port: Optional[int] = None
    local_port: Optional[int] = None


@dataclass
class LookupResult:
    action: str                   # "accept" | "drop"
    rate: Optional[RateSpec]
    provenance: str               # rule provenance or "default"


@dataclass
class Delta:
    added: list[ConcreteRule]
    removed: list[ConcreteRule]


def resolve_abstraction(m: MatchCriteria, ctx: NetworkContext,
                        device: DeviceRecord) -> tuple[set[str], list[CompileWarning]]:
    """Resolve the endpoint abstraction of one match criteria to concrete
    IPs/CIDRs.  Criteria without any abstraction match any remote host."""
    warnings: list[CompileWarning] = []
    if m.dns_name is not None:
        ips = set(ctx.dns_bindings.get(m.dns_name, ()))
        if not ips:
            warnings.append(CompileWarning("UnresolvedName", m.dns_name))
        return ips, warnings
    if m.local_networks:
        return set(ctx.local_subnets), warnings
    if m.same_manufacturer:
        peers = {d.ipv4 for d in ctx.devices
                 if d.mac != device.mac and d.manufacturer and d.manufacturer == device.manufacturer}
        if not peers:
            warnings.append(CompileWarning("NoPeersWarning", device.manufacturer or "<none>"))
        return peers, warnings
    if m.my_controller:
        ips = set(ctx.my_controller_bindings.get(device.mud_url, ()))
        if not ips:
            warnings.append(CompileWarning("NoController", device.mud_url))
        return ips, warnings
    if m.controller_class is not None:
        ips = set(device.controllers.get(m.controller_class, ()))
        if not ips:
            warnings.append(CompileWarning("NoController", m.controller_class))
        return ips, warnings
    if m.manufacturer is not None:
        peers = {d.ipv4 for d in ctx.devices if d.manufacturer == m.manufacturer}
        if not peers:
            warnings.append(CompileWarning("NoPeersWarning", m.manufacturer))
        return peers, warnings
    if m.model is not None:
        peers = {d.ipv4 for d in ctx.devices if d.model == m.model}
        if not peers:
            warnings.append(CompileWarning("NoPeersWarning", m.model))
        return peers, warnings
    # no abstraction: any remote endpoint
    return {"0.0.0.0/0"}, warnings


def _ports_for_direction(ace: Ace, direction: str) -> tuple[Optional[PortRange], Optional[PortRange]]:
    """Map the ACE's src/dst ports onto (remote_port, local_port).

    from-device traffic: the ACE's dst side is the remote host.
    to-device traffic: the ACE's dst side is the device itself.
    """
    m = ace.matches
    if direction == "from-device":
        return m.dst_port, m.src_port
    return m.src_port, m.dst_port


def compile(p: MudProfile, ctx: NetworkContext,
            device: DeviceRecord) -> tuple[RuleSet, list[CompileWarning]]:
    """Expand every ACE against the context.  One rule per resolved endpoint,
    ACE order preserved; ACEs resolving to nothing emit a warning instead."""
    if ctx.device_by_mac(device.mac) is None:
        raise ContextMismatch(f"device {device.mac} not in context")

    rules: list[ConcreteRule] = []
    warnings: list[CompileWarning] = []
    priority = 0
    for direction, acl_names in (("from-device", p.from_device_acls),
                                 ("to-device", p.to_device_acls)):
        for acl_name in acl_names:
            acl = p.acls[acl_name]
            for ace in acl.aces:
                endpoints, w = resolve_abstraction(ace.matches, ctx, device)
                warnings.extend(w)
                if not endpoints:
                    continue
                if ace.action == "accept":
                    kind = "accept_rate_limited" if ace.rate_limit else "accept"
                else:
                    kind = "drop"
                remote_port, local_port = _ports_for_direction(ace, direction)
                for endpoint in sorted(endpoints):
                    rules.append(ConcreteRule(
                        priority=priority,
                        direction=direction,
                        remote_ips=(endpoint,),
                        protocol=ace.matches.protocol,
                        remote_port=remote_port,
                        local_port=local_port,
                        verdict_kind=kind,
                        rate=ace.rate_limit,
                        provenance=f"{acl_name}/{ace.name}",
                    ))
                    priority += 1
    return RuleSet(device_mac=device.mac, rules=rules), warnings


def lookup(rs: RuleSet, pkt: PacketHeader) -> LookupResult:
    """First matching rule by priority wins; no match falls to default drop."""
    if pkt.device_mac != rs.device_mac:
        raise DeviceMismatch(f"packet for {pkt.device_mac}, rule set for {rs.device_mac}")
    ip_int = ip_to_int(pkt.remote_ip)
    for rule in rs.rules:
        if rule.matches(pkt.direction, pkt.protocol, ip_int, pkt.remote_port, pkt.local_port):
            action = "drop" if rule.verdict_kind == "drop" else "accept"
            return LookupResult(action=action, rate=rule.rate, provenance=rule.provenance)
    return LookupResult(action="drop", rate=None, provenance="default")


def diff_rulesets(old: RuleSet, new: RuleSet) -> Delta:
    """Set-semantic delta over canonical rule encodings."""
    if old.device_mac != new.device_mac:
        raise DeviceMismatch(f"{old.device_mac} != {new.device_mac}")
    old_keys = {r.canonical_key(): r for r in old.rules}
    new_keys = {r.canonical_key(): r for r in new.rules}
    added = [r for k, r in new_keys.items() if k not in old_keys]
    removed = [r for k, r in old_keys.items() if k not in new_keys]
    return Delta(added=added, removed=removed)
