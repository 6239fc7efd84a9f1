"""Gateway configuration: YAML file with defaults for absent keys.

`DADA_STATE_DIR` overrides the configured state directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..profiler import (DEFAULT_ALERT_THRESHOLD, DEFAULT_IDENTIFY_GATE,
                        DEFAULT_ISOLATE_THRESHOLD)


class ConfigError(Exception):
    pass


@dataclass
class GatewayConfig:
    state_dir: Path = Path("state")
    context_file: Path = Path("context.json")
    mud_dir: Path = Path("fixtures/mud")
    alert_threshold: float = DEFAULT_ALERT_THRESHOLD
    isolate_threshold: float = DEFAULT_ISOLATE_THRESHOLD
    identify_gate: float = DEFAULT_IDENTIFY_GATE
    window_len_s: float = 60.0
    unmanaged_policy: str = "allow+log"
    bus_endpoint: str = "mem://local"
    http_listen: str = "127.0.0.1:8420"

    def validate(self) -> None:
        for name in ("alert_threshold", "isolate_threshold", "identify_gate", "window_len_s"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"config key '{name}' must be a positive number, got {v!r}")
        if self.unmanaged_policy not in ("allow+log", "allow", "drop"):
            raise ConfigError(f"config key 'unmanaged_policy' has bad value {self.unmanaged_policy!r}")
        self.state_dir.mkdir(parents=True, exist_ok=True)


_PATH_KEYS = ("state_dir", "context_file", "mud_dir")
_NUM_KEYS = ("alert_threshold", "isolate_threshold", "identify_gate", "window_len_s")
_STR_KEYS = ("unmanaged_policy", "bus_endpoint", "http_listen")


def load_config(path) -> GatewayConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")

    cfg = GatewayConfig()
    base = path.parent
    for key, value in raw.items():
        if key in _PATH_KEYS:
            p = Path(value)
            setattr(cfg, key, p if p.is_absolute() else base / p)
        elif key in _NUM_KEYS:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}: config key '{key}' must be a number, got {value!r}")
            setattr(cfg, key, float(value))
        elif key in _STR_KEYS:
            setattr(cfg, key, str(value))
        else:
            raise ConfigError(f"{path}: unknown config key '{key}'")

    env_state = os.environ.get("DADA_STATE_DIR")
    if env_state:
        cfg.state_dir = Path(env_state)
    cfg.validate()
    return cfg
