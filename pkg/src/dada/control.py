"""Tokens-and-pots control plane.

A token proxies a group of devices (MAC list written to the tag); a pot
carries one or more actions; a reader applies the current pot's actions to
every token sitting in it.  Continuous actions hold only while the token
is present; discrete actions latch until another pot supersedes them in
the same category on the same device.

The whole state machine is event sourced: replaying the reader-event log
from empty state reproduces the activation state exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

TAG_CAPACITY_BYTES = 720      # MiFare 1K budget after trailers/header
TOKEN_PREFIX = "tok-"
POT_PREFIX = "pot-"
PAYLOAD_MAGIC = b"DADA1"

ACTION_KINDS = ("RemoveFromNetwork", "AllowResource", "LogAllTraffic",
                "Reboot", "SwitchNetwork", "RestrictAccess")

CATEGORY_OF = {
    "RemoveFromNetwork": "connectivity",
    "SwitchNetwork": "connectivity",
    "AllowResource": "access",
    "RestrictAccess": "access",
    "LogAllTraffic": "logging",
    "Reboot": "power",
}

# higher = more restrictive; ties resolved in favour of the incumbent
RESTRICTIVENESS = {
    ("RemoveFromNetwork", None): 3,
    ("SwitchNetwork", "unprivileged"): 2,
    ("SwitchNetwork", "privileged"): 1,
    ("RestrictAccess", None): 2,
    ("AllowResource", None): 1,
    ("LogAllTraffic", None): 1,
    ("Reboot", None): 1,
}

REBOOT_COOLDOWN_US = 60_000_000   # one simulated reboot per device per minute


class NotAToken(Exception):
    pass


class NotAPot(Exception):
    pass


class CategoryClash(Exception):
    pass


class TagCapacityExceeded(Exception):
    pass


class MalformedMessage(Exception):
    pass


@dataclass(frozen=True)
class ControlAction:
    kind: str
    arg: Optional[str] = None    # resource ref or network name

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind '{self.kind}'")
        if self.kind == "SwitchNetwork" and self.arg not in ("privileged", "unprivileged"):
            raise ValueError("SwitchNetwork needs arg privileged|unprivileged")

    @property
    def category(self) -> str:
        return CATEGORY_OF[self.kind]

    def restrictiveness(self) -> int:
        return RESTRICTIVENESS.get((self.kind, self.arg),
                                   RESTRICTIVENESS.get((self.kind, None), 1))


@dataclass
class DeviceToken:
    token_id: str
    label: str = ""
    macs: list[str] = field(default_factory=list)

    @property
    def payload_bytes(self) -> int:
        return len(encode_token_payload(self.macs, check_capacity=False))


@dataclass
class Pot:
    pot_id: str
    actions: list[ControlAction] = field(default_factory=list)
    modality: str = "continuous"    # "continuous" | "discrete"


@dataclass
class ReaderEvent:
    reader_id: str
    ts: int                                   # microseconds
    pot_tag: Optional[str] = None             # None = pot removed
    token_tags: frozenset = frozenset()

    def to_json(self) -> dict:
        return {"reader_id": self.reader_id, "ts": self.ts,
                "pot": self.pot_tag, "tokens": sorted(self.token_tags)}

    @classmethod
    def from_json(cls, d: dict) -> "ReaderEvent":
        return cls(reader_id=d["reader_id"], ts=d["ts"], pot_tag=d.get("pot"),
                   token_tags=frozenset(d.get("tokens", [])))


@dataclass
class Activation:
    mac: str
    category: str
    kind: str
    arg: Optional[str]
    source_pots: tuple[str, ...]
    since: int
    latched: bool


@dataclass
class ActivationChange:
    ts: int
    change: str                  # "activated" | "revoked" | "superseded"
    mac: str
    category: str
    kind: str
    arg: Optional[str]
    source_pots: tuple[str, ...]
    latched: bool

    def to_json(self) -> dict:
        return {"ts": self.ts, "change": self.change, "mac": self.mac,
                "category": self.category, "kind": self.kind, "arg": self.arg,
                "source_pots": list(self.source_pots), "latched": self.latched}


@dataclass
class LedFeedback:
    reader_id: str
    on: bool

    def to_json(self) -> dict:
        return {"reader_id": self.reader_id, "on": self.on}


@dataclass
class ControlWarning:
    code: str
    detail: str


# ---------------------------------------------------------------------------
# tag payload framing: b"DADA1" + 1-byte count + count * 6-byte MACs

def _mac_bytes(mac: str) -> bytes:
    parts = mac.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC '{mac}'")
    return bytes(int(p, 16) for p in parts)


def encode_token_payload(macs: list[str], check_capacity: bool = True) -> bytes:
    if len(macs) > 255:
        raise TagCapacityExceeded(f"{len(macs)} MACs exceed count byte")
    payload = PAYLOAD_MAGIC + bytes([len(macs)]) + b"".join(_mac_bytes(m) for m in macs)
    if check_capacity and len(payload) > TAG_CAPACITY_BYTES:
        raise TagCapacityExceeded(f"payload {len(payload)} B > {TAG_CAPACITY_BYTES} B")
    return payload


def decode_token_payload(payload: bytes) -> list[str]:
    if payload[:5] != PAYLOAD_MAGIC:
        raise MalformedMessage("bad payload magic")
    count = payload[5]
    if len(payload) != 6 + 6 * count:
        raise MalformedMessage("payload length mismatch")
    return [":".join(f"{b:02x}" for b in payload[6 + 6 * i: 12 + 6 * i]) for i in range(count)]


# ---------------------------------------------------------------------------
# message-bus protocol (MQTT-compatible topic semantics)

READER_STATE_TOPIC = "dada/reader/{reader_id}/state"
READER_LED_TOPIC = "dada/reader/{reader_id}/led"
CHANGES_TOPIC = "dada/control/changes"


def reader_protocol_decode(topic: str, payload: bytes | str) -> ReaderEvent:
    parts = topic.split("/")
    if len(parts) != 4 or parts[0] != "dada" or parts[1] != "reader" or parts[3] != "state":
        raise MalformedMessage(f"unknown topic '{topic}'")
    reader_id = parts[2]
    try:
        body = json.loads(payload)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedMessage(f"bad JSON payload: {exc}") from exc
    if not isinstance(body, dict) or "ts" not in body:
        raise MalformedMessage("payload must be an object with 'ts'")
    pot = body.get("pot")
    tokens = body.get("tokens", [])
    if not isinstance(tokens, list):
        raise MalformedMessage("'tokens' must be a list")
    return ReaderEvent(reader_id=reader_id, ts=int(body["ts"]), pot_tag=pot,
                       token_tags=frozenset(tokens))


def reader_protocol_encode(e: ReaderEvent) -> tuple[str, str]:
    topic = READER_STATE_TOPIC.format(reader_id=e.reader_id)
    return topic, json.dumps({"ts": e.ts, "pot": e.pot_tag, "tokens": sorted(e.token_tags)})


def feedback_encode(led: LedFeedback) -> tuple[str, str]:
    return READER_LED_TOPIC.format(reader_id=led.reader_id), json.dumps({"on": led.on})


def change_encode(change: ActivationChange) -> tuple[str, str]:
    return CHANGES_TOPIC, json.dumps(change.to_json())


# ---------------------------------------------------------------------------
# state machine

class ControlPlane:
    """Serialized tokens/pots/reader state machine.

    ``on_change`` receives every ActivationChange (gateway effect hook);
    ``on_led`` receives LED feedback per processed reader event.
    """

    def __init__(self,
                 on_change: Optional[Callable[[ActivationChange], None]] = None,
                 on_led: Optional[Callable[[LedFeedback], None]] = None,
                 on_reboot: Optional[Callable[[str, int], None]] = None):
        self.tokens: dict[str, DeviceToken] = {}
        self.pots: dict[str, Pot] = {}
        self.reader_states: dict[str, ReaderEvent] = {}
        self.latched: dict[tuple[str, str], Activation] = {}
        self.active: dict[tuple[str, str], Activation] = {}
        self.event_log: list[ReaderEvent] = []
        self.warnings: list[ControlWarning] = []
        self.conflict_log: list[dict] = []
        self.on_change = on_change
        self.on_led = on_led
        self.on_reboot = on_reboot
        self._last_reboot: dict[str, int] = {}

    # -- configuration ------------------------------------------------------

    def associate_token(self, token_id: str, macs: list[str], label: str = "") -> DeviceToken:
        if not token_id.startswith(TOKEN_PREFIX):
            raise NotAToken(token_id)
        encode_token_payload(macs)   # raises TagCapacityExceeded
        prev = self.tokens.get(token_id)
        token = DeviceToken(token_id=token_id, label=label or (prev.label if prev else ""),
                            macs=list(macs))
        self.tokens[token_id] = token
        return token

    def configure_pot(self, pot_id: str, actions: list[ControlAction],
                      modality: str = "continuous") -> Pot:
        if not pot_id.startswith(POT_PREFIX):
            raise NotAPot(pot_id)
        if modality not in ("continuous", "discrete"):
            raise ValueError(f"bad modality '{modality}'")
        if not actions:
            raise ValueError("pot needs at least one action")
        cats = [a.category for a in actions]
        if len(cats) != len(set(cats)):
            raise CategoryClash(f"actions share a category: {cats}")
        pot = Pot(pot_id=pot_id, actions=list(actions), modality=modality)
        self.pots[pot_id] = pot
        return pot

    # -- event processing -----------------------------------------------------

    def apply_reader_state(self, e: ReaderEvent, _replaying: bool = False) -> list[ActivationChange]:
        """Process one reader event and return the resulting changes."""
        self.event_log.append(e)
        known_tokens = frozenset(t for t in e.token_tags if self._known_token(t))
        pot = self._known_pot(e.pot_tag)
        self.reader_states[e.reader_id] = replace(e, token_tags=known_tokens,
                                                  pot_tag=pot.pot_id if pot else None)

        # discrete pots latch on the event itself
        if pot is not None and pot.modality == "discrete":
            for mac in self._macs_for(known_tokens):
                for action in pot.actions:
                    key = (mac, action.category)
                    self.latched[key] = Activation(
                        mac=mac, category=action.category, kind=action.kind,
                        arg=action.arg, source_pots=(pot.pot_id,), since=e.ts, latched=True)

        changes = self._reconcile(e.ts)
        if not _replaying:
            for c in changes:
                self._fire_effect(c)
            if self.on_led is not None:
                lit = pot is not None and any(
                    self.tokens[t].macs for t in known_tokens) and bool(pot.actions)
                self.on_led(LedFeedback(reader_id=e.reader_id, on=lit))
        return changes

    def _known_token(self, tag: str) -> bool:
        if tag in self.tokens:
            return True
        self.warnings.append(ControlWarning("UnknownTag", tag))
        return False

    def _known_pot(self, tag: Optional[str]) -> Optional[Pot]:
        if tag is None:
            return None
        pot = self.pots.get(tag)
        if pot is None or not pot.actions:
            self.warnings.append(ControlWarning(
                "UnknownPot" if pot is None else "UnconfiguredPot", tag))
            return None
        return pot

    def _macs_for(self, token_tags) -> list[str]:
        macs: list[str] = []
        for tag in sorted(token_tags):
            for mac in self.tokens[tag].macs:
                if mac not in macs:
                    macs.append(mac)
        return macs

    def _continuous_demands(self, ts: int) -> list[Activation]:
        demands = []
        for reader_id in sorted(self.reader_states):
            state = self.reader_states[reader_id]
            pot = self.pots.get(state.pot_tag) if state.pot_tag else None
            if pot is None or pot.modality != "continuous":
                continue
            for mac in self._macs_for(state.token_tags):
                for action in pot.actions:
                    demands.append(Activation(
                        mac=mac, category=action.category, kind=action.kind,
                        arg=action.arg, source_pots=(pot.pot_id,), since=ts, latched=False))
        return demands

    def _reconcile(self, ts: int) -> list[ActivationChange]:
        """Recompute the desired activation state from continuous demands
        plus latched entries; most-restrictive wins inside a category."""
        desired: dict[tuple[str, str], Activation] = {}
        for demand in list(self.latched.values()) + self._continuous_demands(ts):
            key = (demand.mac, demand.category)
            incumbent = desired.get(key)
            if incumbent is None:
                desired[key] = demand
            elif (incumbent.kind, incumbent.arg) == (demand.kind, demand.arg):
                # identical demands from replicated tokens: merge sources
                sources = tuple(sorted(set(incumbent.source_pots) | set(demand.source_pots)))
                desired[key] = replace(incumbent, source_pots=sources,
                                       latched=incumbent.latched or demand.latched)
            else:
                winner = self.resolve_conflicts(incumbent, demand)
                self.conflict_log.append({
                    "ts": ts, "mac": demand.mac, "category": demand.category,
                    "demands": [(incumbent.kind, incumbent.arg, incumbent.source_pots),
                                (demand.kind, demand.arg, demand.source_pots)],
                    "winner": (winner.kind, winner.arg),
                })
                desired[key] = winner

        changes: list[ActivationChange] = []
        for key, act in desired.items():
            old = self.active.get(key)
            if old is None:
                changes.append(self._change(ts, "activated", act))
            elif (old.kind, old.arg, old.source_pots) != (act.kind, act.arg, act.source_pots):
                changes.append(self._change(ts, "superseded", act))
            else:
                desired[key] = old   # keep original 'since'
        for key, old in self.active.items():
            if key not in desired:
                changes.append(self._change(ts, "revoked", old))
        self.active = desired
        return changes

    @staticmethod
    def resolve_conflicts(a: Activation, b: Activation) -> Activation:
        """Most-restrictive demand wins within a (mac, category) slot."""
        ra = ControlAction(a.kind, a.arg).restrictiveness()
        rb = ControlAction(b.kind, b.arg).restrictiveness()
        return a if ra >= rb else b

    @staticmethod
    def _change(ts: int, what: str, act: Activation) -> ActivationChange:
        return ActivationChange(ts=ts, change=what, mac=act.mac, category=act.category,
                                kind=act.kind, arg=act.arg, source_pots=act.source_pots,
                                latched=act.latched)

    def _fire_effect(self, c: ActivationChange) -> None:
        if c.change in ("activated", "superseded") and c.kind == "Reboot":
            last = self._last_reboot.get(c.mac)
            if last is not None and c.ts - last < REBOOT_COOLDOWN_US:
                self.warnings.append(ControlWarning("RebootSuppressed", c.mac))
            else:
                self._last_reboot[c.mac] = c.ts
                if self.on_reboot is not None:
                    self.on_reboot(c.mac, c.ts)
        if self.on_change is not None:
            self.on_change(c)

    # -- replay ---------------------------------------------------------------

    @classmethod
    def replay(cls, tokens: dict[str, DeviceToken], pots: dict[str, Pot],
               events: list[ReaderEvent]) -> "ControlPlane":
        """Rebuild activation state from the event log, without firing
        external effects."""
        cp = cls()
        cp.tokens = dict(tokens)
        cp.pots = dict(pots)
        for e in events:
            cp.apply_reader_state(e, _replaying=True)
        return cp

    def activation_state(self) -> dict:
        """Canonical JSON-able view of the active entries."""
        return {
            f"{mac}|{cat}": {
                "kind": a.kind, "arg": a.arg, "source_pots": list(a.source_pots),
                "since": a.since, "latched": a.latched,
            }
            for (mac, cat), a in sorted(self.active.items())
        }
