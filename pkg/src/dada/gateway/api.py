"""Gateway composition root and HTTP API.

All mutations funnel through one Gateway object; the HTTP endpoints and
the message-bus topics are two faces of the same operations (the virtual
reader endpoint mirrors `dada/reader/<id>/state`).  `/events` streams
every ActivationChange, AnomalyReport and LedFeedback as server-sent
events, in order.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from .. import compiler, control, mud
from ..control import (ActivationChange, CategoryClash, ControlAction,
                       ControlPlane, LedFeedback, NotAPot, NotAToken,
                       ReaderEvent, TagCapacityExceeded, change_encode,
                       feedback_encode, reader_protocol_decode)
from ..datapath import Datapath, EmptyHistogram
from ..netcontext import load_context
from ..profiler import AnomalyReport, ProfileStore
from .bus import InMemoryBus
from .config import GatewayConfig
from .store import StateStore


class Gateway:
    def __init__(self, config: GatewayConfig):
        self.config = config
        self.context = load_context(config.context_file)
        self.store = StateStore(config.state_dir)
        self.labels: dict[str, str] = self.store.load_labels()
        self.profiles = ProfileStore(self.store.profiles_dir)

        self.datapath = Datapath(
            gateway_ip=self.context.gateway_ip,
            unmanaged_policy=config.unmanaged_policy,
        )
        for d in self.context.devices:
            self.datapath.register(d.mac)
        self.compile_warnings = self._install_mud_rulesets()

        self.changes: list[ActivationChange] = []
        self.anomalies: list[AnomalyReport] = []
        self.subscribers: list[asyncio.Queue] = []
        self.bus: InMemoryBus | None = None

        self.control = ControlPlane(on_change=self._on_change, on_led=self._on_led,
                                    on_reboot=self._on_reboot)
        self._replaying = True
        self.store.replay_into(self.control)
        self._replaying = False
        self._resync_datapath()

    # -- startup ---------------------------------------------------------------

    def _install_mud_rulesets(self):
        warnings = []
        by_url = {}
        mud_dir = Path(self.config.mud_dir)
        if mud_dir.is_dir():
            for path in sorted(mud_dir.glob("*.json")):
                try:
                    profile = mud.load_mud_file(path)
                except mud.MudError:
                    continue
                by_url[profile.mud_url] = profile
        for device in self.context.devices:
            profile = by_url.get(device.mud_url)
            if profile is None:
                continue
            ruleset, w = compiler.compile(profile, self.context, device)
            warnings.extend(w)
            self.datapath.install_ruleset(ruleset)
        return warnings

    def _resync_datapath(self) -> None:
        """Apply the replayed activation state to the freshly built datapath."""
        for (mac, _cat), act in self.control.active.items():
            self._apply_effect_kind(mac, act.kind, act.arg, active=True)

    # -- effects -----------------------------------------------------------------

    def _apply_effect_kind(self, mac: str, kind: str, arg, active: bool) -> None:
        if self.datapath.states.get(mac) is None:
            self.datapath.register(mac)
        if kind == "RemoveFromNetwork":
            self.datapath.set_mode(mac, "isolated" if active else "normal")
        elif kind == "SwitchNetwork":
            self.datapath.set_mode(mac, arg if active else "normal")
        elif kind == "LogAllTraffic":
            self.datapath.set_logging(mac, active)
        # AllowResource / RestrictAccess are recorded policy intents; Reboot
        # is handled through the control plane's reboot hook

    def _on_change(self, c: ActivationChange) -> None:
        self.changes.append(c)
        self._apply_effect_kind(c.mac, c.kind, c.arg,
                                active=c.change in ("activated", "superseded"))
        if not self._replaying:
            self._broadcast("ActivationChange", c.to_json())
            if self.bus is not None:
                topic, payload = change_encode(c)
                self.bus.publish(topic, payload)

    def _on_led(self, led: LedFeedback) -> None:
        if self._replaying:
            return
        self._broadcast("LedFeedback", led.to_json())
        if self.bus is not None:
            topic, payload = feedback_encode(led)
            self.bus.publish(topic, payload)

    def _on_reboot(self, mac: str, ts: int) -> None:
        if self.datapath.states.get(mac) is not None:
            self.datapath.reboot(mac, ts)

    def publish_anomaly(self, report: AnomalyReport) -> None:
        self.anomalies.append(report)
        self._broadcast("AnomalyReport", {
            "mac": report.mac, "window_start": report.window_start,
            "score": report.score, "offending_dims": report.offending_dims,
            "proposed_action": report.proposed_action,
        })

    def _broadcast(self, event_type: str, payload: dict) -> None:
        for q in list(self.subscribers):
            q.put_nowait((event_type, payload))

    # -- bus binding -----------------------------------------------------------

    def attach_bus(self, bus: InMemoryBus) -> None:
        self.bus = bus
        bus.subscribe("dada/reader/+/state", self._on_bus_message)

    def _on_bus_message(self, topic: str, payload: str) -> None:
        try:
            event = reader_protocol_decode(topic, payload)
        except control.MalformedMessage:
            return
        self.apply_reader_event(event)

    # -- operations ----------------------------------------------------------------

    def apply_reader_event(self, event: ReaderEvent) -> list[ActivationChange]:
        self.store.log_reader_event(event)
        return self.control.apply_reader_state(event)

    def associate_token(self, token_id: str, macs: list[str], label: str = ""):
        token = self.control.associate_token(token_id, macs, label)
        self.store.log_associate(token_id, macs, token.label)
        return token

    def configure_pot(self, pot_id: str, actions: list[ControlAction], modality: str):
        pot = self.control.configure_pot(pot_id, actions, modality)
        self.store.log_configure(pot_id, [{"kind": a.kind, "arg": a.arg} for a in actions],
                                 modality)
        return pot

    def set_label(self, mac: str, label: str) -> None:
        self.labels[mac] = label
        self.store.save_labels(self.labels)

    def canonical_state(self) -> bytes:
        return StateStore.canonical_state(self.control, self.labels)

    def device_view(self) -> list[dict]:
        out = []
        for d in self.context.devices:
            st = self.datapath.states.get(d.mac)
            out.append({
                "mac": d.mac, "ipv4": d.ipv4, "label": self.labels.get(d.mac, ""),
                "manufacturer": d.manufacturer, "model": d.model, "mud_url": d.mud_url,
                "managed": bool(st and st.ruleset is not None),
                "mode": st.mode if st else "normal",
                "logging": bool(st and st.logging),
            })
        return out


def create_app(config: GatewayConfig) -> FastAPI:
    gw = Gateway(config)
    app = FastAPI(title="dada gateway")
    app.state.gateway = gw

    @app.get("/devices")
    async def get_devices():
        return gw.device_view()

    @app.post("/devices/{mac}/label")
    async def set_label(mac: str, body: dict = Body(...)):
        if gw.context.device_by_mac(mac) is None:
            raise HTTPException(404, f"unknown device {mac}")
        gw.set_label(mac, str(body.get("label", "")))
        return {"mac": mac, "label": gw.labels[mac]}

    @app.get("/tokens")
    async def get_tokens():
        return [{"token_id": t.token_id, "label": t.label, "macs": t.macs,
                 "payload_bytes": t.payload_bytes}
                for t in gw.control.tokens.values()]

    @app.post("/tokens/{token_id}/associate")
    async def associate(token_id: str, body: dict = Body(...)):
        try:
            token = gw.associate_token(token_id, list(body.get("macs", [])),
                                       str(body.get("label", "")))
        except NotAToken as exc:
            raise HTTPException(400, f"not a token id: {exc}")
        except TagCapacityExceeded as exc:
            raise HTTPException(400, str(exc))
        return {"token_id": token.token_id, "label": token.label, "macs": token.macs}

    @app.get("/pots")
    async def get_pots():
        return [{"pot_id": p.pot_id, "modality": p.modality,
                 "actions": [{"kind": a.kind, "arg": a.arg} for a in p.actions]}
                for p in gw.control.pots.values()]

    @app.post("/pots/{pot_id}/configure")
    async def configure(pot_id: str, body: dict = Body(...)):
        try:
            actions = [ControlAction(a["kind"], a.get("arg")) for a in body.get("actions", [])]
            pot = gw.configure_pot(pot_id, actions, body.get("modality", "continuous"))
        except NotAPot as exc:
            raise HTTPException(400, f"not a pot id: {exc}")
        except (CategoryClash, ValueError, KeyError) as exc:
            raise HTTPException(400, str(exc))
        return {"pot_id": pot.pot_id, "modality": pot.modality,
                "actions": [{"kind": a.kind, "arg": a.arg} for a in pot.actions]}

    @app.post("/reader/{reader_id}/state")
    async def reader_state(reader_id: str, body: dict = Body(...)):
        if "ts" not in body:
            raise HTTPException(400, "missing 'ts'")
        event = ReaderEvent(reader_id=reader_id, ts=int(body["ts"]),
                            pot_tag=body.get("pot"),
                            token_tags=frozenset(body.get("tokens", [])))
        changes = gw.apply_reader_event(event)
        return {"changes": [c.to_json() for c in changes]}

    @app.get("/activations")
    async def get_activations():
        return gw.control.activation_state()

    @app.get("/anomalies")
    async def get_anomalies():
        return [{"mac": a.mac, "window_start": a.window_start, "score": a.score,
                 "offending_dims": a.offending_dims, "proposed_action": a.proposed_action}
                for a in gw.anomalies]

    @app.get("/metrics/latency")
    async def latency():
        try:
            return gw.datapath.latency_report()
        except EmptyHistogram:
            return {"count": 0, "buckets": []}

    @app.get("/events")
    async def events():
        q: asyncio.Queue = asyncio.Queue()
        gw.subscribers.append(q)

        async def stream():
            try:
                while True:
                    event_type, payload = await q.get()
                    yield f"event: {event_type}\ndata: {json.dumps(payload)}\n\n"
            finally:
                if q in gw.subscribers:
                    gw.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
