"""Persistent gateway state: an append-only control-plane log plus JSON
snapshots.  Reload replays the log from empty state, so a restart
reproduces the exact in-memory activation state.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..control import ControlAction, ControlPlane, ReaderEvent


class StateStore:
    def __init__(self, state_dir):
        self.dir = Path(state_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.dir / "control_log.jsonl"
        self.labels_path = self.dir / "labels.json"
        self.profiles_dir = self.dir / "profiles"
        self.profiles_dir.mkdir(exist_ok=True)

    # -- append-only control log ---------------------------------------------

    def append(self, entry: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def log_associate(self, token_id: str, macs: list[str], label: str) -> None:
        self.append({"type": "associate", "token_id": token_id, "macs": macs, "label": label})

    def log_configure(self, pot_id: str, actions: list[dict], modality: str) -> None:
        self.append({"type": "configure", "pot_id": pot_id, "actions": actions,
                     "modality": modality})

    def log_reader_event(self, e: ReaderEvent) -> None:
        self.append({"type": "reader", **e.to_json()})

    def read_log(self) -> list[dict]:
        if not self.log_path.exists():
            return []
        entries = []
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
        return entries

    def replay_into(self, cp: ControlPlane) -> None:
        """Rebuild a control plane from the log; external effects are not
        fired during replay (callers resync the datapath afterwards)."""
        for entry in self.read_log():
            kind = entry["type"]
            if kind == "associate":
                cp.associate_token(entry["token_id"], entry["macs"], entry.get("label", ""))
            elif kind == "configure":
                actions = [ControlAction(a["kind"], a.get("arg")) for a in entry["actions"]]
                cp.configure_pot(entry["pot_id"], actions, entry["modality"])
            elif kind == "reader":
                cp.apply_reader_state(ReaderEvent.from_json(entry), _replaying=True)

    # -- snapshots ----------------------------------------------------------

    def save_labels(self, labels: dict[str, str]) -> None:
        self.labels_path.write_text(json.dumps(labels, sort_keys=True, indent=2),
                                    encoding="utf-8")

    def load_labels(self) -> dict[str, str]:
        if not self.labels_path.exists():
            return {}
        return json.loads(self.labels_path.read_text(encoding="utf-8"))

    # -- canonical serialization ----------------------------------------------

    @staticmethod
    def canonical_state(cp: ControlPlane, labels: dict[str, str]) -> bytes:
        doc = {
            "activations": cp.activation_state(),
            "tokens": {tid: {"label": t.label, "macs": t.macs}
                       for tid, t in sorted(cp.tokens.items())},
            "pots": {pid: {"modality": p.modality,
                           "actions": [{"kind": a.kind, "arg": a.arg} for a in p.actions]}
                     for pid, p in sorted(cp.pots.items())},
            "labels": dict(sorted(labels.items())),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
