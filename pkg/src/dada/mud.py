"""MUD (RFC 8520) document model, parser, validator, and canonicalizer.

Documents are JSON files using the RFC 8520 field names (`ietf-mud:mud`
container plus `ietf-access-control-list:acls`).  A per-ACE traffic-rate
extension is carried in the keys `dada:max-bytes-per-second`,
`dada:max-packets-per-second` and `dada:burst-bytes`.

Only IPv4 ACLs are supported; ipv6 ACL types are rejected with
``UnsupportedFamily``.  Unknown extension keys at the document and ACE
level are preserved verbatim and otherwise ignored.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional


class MudError(Exception):
    """Base class for MUD document failures; carries a document path."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.message = message
        self.path = path


class MalformedDocument(MudError):
    pass


class SchemaViolation(MalformedDocument):
    pass


class UnsupportedVersion(MalformedDocument):
    pass


class UnsupportedFamily(SchemaViolation):
    pass


PROTOCOL_NUMBERS = {"tcp": 6, "udp": 17, "icmp": 1}
PROTOCOL_NAMES = {v: k for k, v in PROTOCOL_NUMBERS.items()}

RATE_BYTES_KEY = "dada:max-bytes-per-second"
RATE_PACKETS_KEY = "dada:max-packets-per-second"
RATE_BURST_KEY = "dada:burst-bytes"

ABSTRACTION_FIELDS = (
    "dns_name",
    "controller_class",
    "my_controller",
    "local_networks",
    "same_manufacturer",
    "manufacturer",
    "model",
)


@dataclass
class RateSpec:
    """Per-ACE expected traffic rate.  At least one max must be > 0."""

    max_bytes_per_second: int = 0
    max_packets_per_second: int = 0
    burst_bytes: int = 0


@dataclass
class PortRange:
    low: int
    high: int


@dataclass
class MatchCriteria:
    protocol: Optional[str] = None
    src_port: Optional[PortRange] = None
    dst_port: Optional[PortRange] = None
    direction_initiated: Optional[str] = None
    dns_name: Optional[str] = None
    controller_class: Optional[str] = None
    my_controller: bool = False
    local_networks: bool = False
    same_manufacturer: bool = False
    manufacturer: Optional[str] = None
    model: Optional[str] = None

    def abstractions(self) -> list[str]:
        """Names of the endpoint abstraction fields that are set."""
        return [f for f in ABSTRACTION_FIELDS if getattr(self, f)]


@dataclass
class Ace:
    name: str
    matches: MatchCriteria
    action: str  # "accept" | "drop"
    rate_limit: Optional[RateSpec] = None
    extensions: dict = field(default_factory=dict)


@dataclass
class AccessControlList:
    name: str
    address_family: str  # only "ipv4"
    aces: list[Ace] = field(default_factory=list)


@dataclass
class MudProfile:
    mud_url: str
    mud_version: int
    last_update: str
    cache_validity: int
    is_supported: bool
    system_info: str
    from_device_acls: list[str] = field(default_factory=list)
    to_device_acls: list[str] = field(default_factory=list)
    acls: dict[str, AccessControlList] = field(default_factory=dict)
    extensions: dict = field(default_factory=dict)


@dataclass
class Violation:
    path: str
    rule: str
    detail: str = ""


# ---------------------------------------------------------------------------
# parsing

_MUD_CONTAINER_KEYS = {
    "mud-version",
    "mud-url",
    "last-update",
    "cache-validity",
    "is-supported",
    "systeminfo",
    "from-device-policy",
    "to-device-policy",
}

_ACE_KEYS = {"name", "matches", "actions", RATE_BYTES_KEY, RATE_PACKETS_KEY, RATE_BURST_KEY}


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"missing required field '{key}'", path)
    return obj[key]


def _expect_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise MalformedDocument("expected an object", path)
    return value


def parse_mud(document: str | dict) -> MudProfile:
    """Parse a MUD document (JSON text or already-decoded dict).

    Raises MalformedDocument on syntax errors, UnsupportedVersion when
    mud-version != 1, SchemaViolation for missing fields or dangling ACL
    references, UnsupportedFamily for non-ipv4 ACLs.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}") from exc
    doc = _expect_dict(document, "$")

    mud = _expect_dict(_require(doc, "ietf-mud:mud", "$"), "$.ietf-mud:mud")
    mpath = "$.ietf-mud:mud"
    if "mud-version" not in mud:
        raise MalformedDocument("missing mud-version", mpath)
    version = mud["mud-version"]
    if version != 1:
        raise UnsupportedVersion(f"mud-version {version} is not supported", mpath)

    cache_validity = mud.get("cache-validity", 48)
    if not isinstance(cache_validity, int) or cache_validity < 1:
        raise SchemaViolation("cache-validity must be an integer >= 1", mpath)

    from_names = _policy_acl_names(mud.get("from-device-policy"), mpath + ".from-device-policy")
    to_names = _policy_acl_names(mud.get("to-device-policy"), mpath + ".to-device-policy")

    acls: dict[str, AccessControlList] = {}
    acl_container = doc.get("ietf-access-control-list:acls", {})
    for i, raw_acl in enumerate(_expect_dict(acl_container, "$.ietf-access-control-list:acls").get("acl", [])):
        apath = f"$.ietf-access-control-list:acls.acl[{i}]"
        raw_acl = _expect_dict(raw_acl, apath)
        acl = _parse_acl(raw_acl, apath)
        if acl.name in acls:
            raise SchemaViolation(f"duplicate ACL name '{acl.name}'", apath)
        acls[acl.name] = acl

    for name in from_names + to_names:
        if name not in acls:
            raise SchemaViolation(f"policy references undefined ACL '{name}'", mpath)

    extensions = {k: v for k, v in doc.items()
                  if k not in ("ietf-mud:mud", "ietf-access-control-list:acls")}
    mud_extensions = {k: v for k, v in mud.items() if k not in _MUD_CONTAINER_KEYS}
    if mud_extensions:
        extensions["ietf-mud:mud"] = mud_extensions

    return MudProfile(
        mud_url=_require(mud, "mud-url", mpath),
        mud_version=version,
        last_update=mud.get("last-update", ""),
        cache_validity=cache_validity,
        is_supported=bool(mud.get("is-supported", True)),
        system_info=mud.get("systeminfo", ""),
        from_device_acls=from_names,
        to_device_acls=to_names,
        acls=acls,
        extensions=extensions,
    )


def _policy_acl_names(policy, path: str) -> list[str]:
    if policy is None:
        return []
    policy = _expect_dict(policy, path)
    lists = _expect_dict(policy.get("access-lists", {}), path + ".access-lists")
    names = []
    for i, entry in enumerate(lists.get("access-list", [])):
        entry = _expect_dict(entry, f"{path}.access-lists.access-list[{i}]")
        names.append(_require(entry, "name", f"{path}.access-lists.access-list[{i}]"))
    return names


def _parse_acl(raw: dict, path: str) -> AccessControlList:
    name = _require(raw, "name", path)
    acl_type = raw.get("type", "ipv4-acl-type")
    if "ipv6" in acl_type:
        raise UnsupportedFamily(f"ACL '{name}' uses unsupported family '{acl_type}'", path)
    if acl_type not in ("ipv4-acl-type", "ietf-access-control-list:ipv4-acl-type"):
        raise UnsupportedFamily(f"ACL '{name}' has unknown type '{acl_type}'", path)

    aces = []
    seen = set()
    for i, raw_ace in enumerate(_expect_dict(raw.get("aces", {}), path + ".aces").get("ace", [])):
        apath = f"{path}.aces.ace[{i}]"
        ace = _parse_ace(_expect_dict(raw_ace, apath), apath)
        if ace.name in seen:
            raise SchemaViolation(f"duplicate ACE name '{ace.name}' in ACL '{name}'", apath)
        seen.add(ace.name)
        aces.append(ace)
    return AccessControlList(name=name, address_family="ipv4", aces=aces)


def _parse_ace(raw: dict, path: str) -> Ace:
    name = _require(raw, "name", path)
    actions = _expect_dict(_require(raw, "actions", path), path + ".actions")
    action = _require(actions, "forwarding", path + ".actions")
    if action not in ("accept", "drop"):
        raise SchemaViolation(f"unknown forwarding action '{action}'", path)

    matches = _parse_matches(_expect_dict(raw.get("matches", {}), path + ".matches"), path + ".matches")

    rate = None
    if any(k in raw for k in (RATE_BYTES_KEY, RATE_PACKETS_KEY, RATE_BURST_KEY)):
        rate = RateSpec(
            max_bytes_per_second=int(raw.get(RATE_BYTES_KEY, 0)),
            max_packets_per_second=int(raw.get(RATE_PACKETS_KEY, 0)),
            burst_bytes=int(raw.get(RATE_BURST_KEY, 0)),
        )
        if rate.max_bytes_per_second <= 0 and rate.max_packets_per_second <= 0:
            raise SchemaViolation("rate extension needs max-bytes or max-packets > 0", path)
        if action == "drop":
            raise SchemaViolation("rate extension is only valid on accept ACEs", path)
        if min(rate.max_bytes_per_second, rate.max_packets_per_second, rate.burst_bytes) < 0:
            raise SchemaViolation("rate extension values must be >= 0", path)

    extensions = {k: v for k, v in raw.items() if k not in _ACE_KEYS}
    return Ace(name=name, matches=matches, action=action, rate_limit=rate, extensions=extensions)


def _parse_port(raw, path: str) -> PortRange:
    raw = _expect_dict(raw, path)
    if raw.get("operator") == "eq" or "port" in raw:
        port = int(_require(raw, "port", path))
        rng = PortRange(port, port)
    else:
        rng = PortRange(int(_require(raw, "lower-port", path)), int(_require(raw, "upper-port", path)))
    if not (0 <= rng.low <= rng.high <= 65535):
        raise SchemaViolation(f"bad port range {rng.low}-{rng.high}", path)
    return rng


def _parse_matches(raw: dict, path: str) -> MatchCriteria:
    m = MatchCriteria()
    ipv4 = raw.get("ipv4")
    if ipv4 is not None:
        ipv4 = _expect_dict(ipv4, path + ".ipv4")
        proto_num = ipv4.get("protocol")
        if proto_num is not None:
            if proto_num not in PROTOCOL_NAMES:
                raise SchemaViolation(f"unsupported protocol number {proto_num}", path + ".ipv4")
            m.protocol = PROTOCOL_NAMES[proto_num]
        m.dns_name = ipv4.get("ietf-acldns:dst-dnsname") or ipv4.get("ietf-acldns:src-dnsname")

    for l4 in ("tcp", "udp"):
        seg = raw.get(l4)
        if seg is None:
            continue
        seg = _expect_dict(seg, f"{path}.{l4}")
        if m.protocol is None:
            m.protocol = l4
        if "source-port" in seg:
            m.src_port = _parse_port(seg["source-port"], f"{path}.{l4}.source-port")
        if "destination-port" in seg:
            m.dst_port = _parse_port(seg["destination-port"], f"{path}.{l4}.destination-port")
        if l4 == "tcp" and "ietf-mud:direction-initiated" in seg:
            di = seg["ietf-mud:direction-initiated"]
            if di not in ("from-device", "to-device"):
                raise SchemaViolation(f"bad direction-initiated '{di}'", f"{path}.tcp")
            m.direction_initiated = di

    mud_match = raw.get("ietf-mud:mud")
    if mud_match is not None:
        mud_match = _expect_dict(mud_match, path + ".ietf-mud:mud")
        m.controller_class = mud_match.get("controller")
        m.my_controller = "my-controller" in mud_match
        m.local_networks = "local-networks" in mud_match
        m.same_manufacturer = "same-manufacturer" in mud_match
        m.manufacturer = mud_match.get("manufacturer")
        m.model = mud_match.get("model")

    if len(m.abstractions()) > 1:
        raise SchemaViolation(f"multiple endpoint abstractions set: {m.abstractions()}", path)
    return m


# ---------------------------------------------------------------------------
# serialization

def serialize_mud(p: MudProfile) -> dict:
    """Rebuild the RFC 8520-shaped JSON document for a profile."""
    mud: dict[str, Any] = {
        "mud-version": p.mud_version,
        "mud-url": p.mud_url,
        "last-update": p.last_update,
        "cache-validity": p.cache_validity,
        "is-supported": p.is_supported,
        "systeminfo": p.system_info,
    }
    if p.from_device_acls:
        mud["from-device-policy"] = _policy_block(p.from_device_acls)
    if p.to_device_acls:
        mud["to-device-policy"] = _policy_block(p.to_device_acls)

    doc: dict[str, Any] = {"ietf-mud:mud": mud}
    for k, v in p.extensions.items():
        if k == "ietf-mud:mud":
            mud.update(v)
        else:
            doc[k] = v
    doc["ietf-access-control-list:acls"] = {
        "acl": [_serialize_acl(acl) for acl in p.acls.values()]
    }
    return doc


def _policy_block(names: list[str]) -> dict:
    return {"access-lists": {"access-list": [{"name": n} for n in names]}}


def _serialize_acl(acl: AccessControlList) -> dict:
    return {
        "name": acl.name,
        "type": "ipv4-acl-type",
        "aces": {"ace": [_serialize_ace(a) for a in acl.aces]},
    }


def _serialize_ace(ace: Ace) -> dict:
    m = ace.matches
    matches: dict[str, Any] = {}
    ipv4: dict[str, Any] = {}
    if m.protocol is not None:
        ipv4["protocol"] = PROTOCOL_NUMBERS[m.protocol]
    if m.dns_name is not None:
        ipv4["ietf-acldns:dst-dnsname"] = m.dns_name
    if ipv4:
        matches["ipv4"] = ipv4

    if m.protocol in ("tcp", "udp") and (m.src_port or m.dst_port or m.direction_initiated):
        seg: dict[str, Any] = {}
        if m.src_port:
            seg["source-port"] = _serialize_port(m.src_port)
        if m.dst_port:
            seg["destination-port"] = _serialize_port(m.dst_port)
        if m.protocol == "tcp" and m.direction_initiated:
            seg["ietf-mud:direction-initiated"] = m.direction_initiated
        matches[m.protocol] = seg

    mud_match: dict[str, Any] = {}
    if m.controller_class:
        mud_match["controller"] = m.controller_class
    if m.my_controller:
        mud_match["my-controller"] = [None]
    if m.local_networks:
        mud_match["local-networks"] = [None]
    if m.same_manufacturer:
        mud_match["same-manufacturer"] = [None]
    if m.manufacturer:
        mud_match["manufacturer"] = m.manufacturer
    if m.model:
        mud_match["model"] = m.model
    if mud_match:
        matches["ietf-mud:mud"] = mud_match

    out: dict[str, Any] = {
        "name": ace.name,
        "matches": matches,
        "actions": {"forwarding": ace.action},
    }
    if ace.rate_limit is not None:
        r = ace.rate_limit
        if r.max_bytes_per_second:
            out[RATE_BYTES_KEY] = r.max_bytes_per_second
        if r.max_packets_per_second:
            out[RATE_PACKETS_KEY] = r.max_packets_per_second
        if r.burst_bytes:
            out[RATE_BURST_KEY] = r.burst_bytes
    out.update(ace.extensions)
    return out


def _serialize_port(rng: PortRange) -> dict:
    if rng.low == rng.high:
        return {"operator": "eq", "port": rng.low}
    return {"lower-port": rng.low, "upper-port": rng.high}


# ---------------------------------------------------------------------------
# validation and canonical form

def validate_profile(p: MudProfile) -> list[Violation]:
    """Check all profile invariants; violations are data, not exceptions."""
    out: list[Violation] = []
    if p.mud_version != 1:
        out.append(Violation("mud_version", "UnsupportedVersion", f"got {p.mud_version}"))
    if p.cache_validity < 1:
        out.append(Violation("cache_validity", "CacheValidityTooSmall", f"got {p.cache_validity}"))
    for which, names in (("from_device_acls", p.from_device_acls), ("to_device_acls", p.to_device_acls)):
        for n in names:
            if n not in p.acls:
                out.append(Violation(f"{which}[{n}]", "DanglingAclRef", f"ACL '{n}' not defined"))
    for acl in p.acls.values():
        if acl.address_family != "ipv4":
            out.append(Violation(f"acls[{acl.name}]", "UnsupportedFamily", acl.address_family))
        seen = set()
        for ace in acl.aces:
            apath = f"acls[{acl.name}].aces[{ace.name}]"
            if ace.name in seen:
                out.append(Violation(apath, "DuplicateAceName", ""))
            seen.add(ace.name)
            if ace.action not in ("accept", "drop"):
                out.append(Violation(apath, "BadAction", ace.action))
            if ace.rate_limit is not None:
                if ace.action == "drop":
                    out.append(Violation(apath, "RateOnDrop", ""))
                r = ace.rate_limit
                if r.max_bytes_per_second <= 0 and r.max_packets_per_second <= 0:
                    out.append(Violation(apath, "EmptyRateSpec", ""))
                if min(r.max_bytes_per_second, r.max_packets_per_second, r.burst_bytes) < 0:
                    out.append(Violation(apath, "NegativeRate", ""))
            if len(ace.matches.abstractions()) > 1:
                out.append(Violation(apath, "MultipleAbstractions", str(ace.matches.abstractions())))
            for pr in (ace.matches.src_port, ace.matches.dst_port):
                if pr is not None and not (0 <= pr.low <= pr.high <= 65535):
                    out.append(Violation(apath, "BadPortRange", f"{pr.low}-{pr.high}"))
    return out


def canonicalize(p: MudProfile) -> MudProfile:
    """Return a copy with ACLs in name order.  Idempotent; ACE order is
    semantic (first match wins) and is kept as-is."""
    return MudProfile(
        mud_url=p.mud_url,
        mud_version=p.mud_version,
        last_update=p.last_update,
        cache_validity=p.cache_validity,
        is_supported=p.is_supported,
        system_info=p.system_info,
        from_device_acls=list(p.from_device_acls),
        to_device_acls=list(p.to_device_acls),
        acls={name: p.acls[name] for name in sorted(p.acls)},
        extensions=dict(p.extensions),
    )


def content_hash(p: MudProfile) -> str:
    """Stable sha256 over the canonical serialized form."""
    blob = json.dumps(serialize_mud(canonicalize(p)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_mud_file(path) -> MudProfile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mud(fh.read())
