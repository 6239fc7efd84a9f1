"""Concrete home-network context against which MUD abstractions resolve.

The context is a static, file-supplied picture of the home: devices with
their MAC/IP/manufacturer identity, DNS name bindings, local subnets and
the gateway address.  There is no live discovery or DNS resolution.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field


class ContextError(Exception):
    pass


@dataclass
class DeviceRecord:
    mac: str
    ipv4: str
    manufacturer: str = ""      # authority string, e.g. "example.com"
    model: str = ""             # model URI
    mud_url: str = ""           # empty = unmanaged device
    controllers: dict[str, set[str]] = field(default_factory=dict)  # class URI -> IPs


@dataclass
class NetworkContext:
    devices: list[DeviceRecord] = field(default_factory=list)
    dns_bindings: dict[str, set[str]] = field(default_factory=dict)
    local_subnets: list[str] = field(default_factory=list)
    gateway_ip: str = "192.168.1.1"
    my_controller_bindings: dict[str, set[str]] = field(default_factory=dict)  # mud_url -> IPs

    def device_by_mac(self, mac: str) -> DeviceRecord | None:
        for d in self.devices:
            if d.mac == mac:
                return d
        return None

    def validate(self) -> None:
        macs = [d.mac for d in self.devices]
        if len(macs) != len(set(macs)):
            raise ContextError("duplicate device MAC in context")
        nets = [ipaddress.ip_network(s) for s in self.local_subnets]
        for d in self.devices:
            addr = ipaddress.ip_address(d.ipv4)
            if not any(addr in n for n in nets):
                raise ContextError(f"device {d.mac} ip {d.ipv4} outside local subnets")


def context_from_dict(raw: dict) -> NetworkContext:
    devices = []
    for rd in raw.get("devices", []):
        devices.append(DeviceRecord(
            mac=rd["mac"],
            ipv4=rd["ipv4"],
            manufacturer=rd.get("manufacturer", ""),
            model=rd.get("model", ""),
            mud_url=rd.get("mud_url", ""),
            controllers={k: set(v) for k, v in rd.get("controllers", {}).items()},
        ))
    ctx = NetworkContext(
        devices=devices,
        dns_bindings={k: set(v) for k, v in raw.get("dns_bindings", {}).items()},
        local_subnets=list(raw.get("local_subnets", [])),
        gateway_ip=raw.get("gateway_ip", "192.168.1.1"),
        my_controller_bindings={k: set(v) for k, v in raw.get("my_controller_bindings", {}).items()},
    )
    ctx.validate()
    return ctx


def context_to_dict(ctx: NetworkContext) -> dict:
    return {
        "devices": [
            {
                "mac": d.mac,
                "ipv4": d.ipv4,
                "manufacturer": d.manufacturer,
                "model": d.model,
                "mud_url": d.mud_url,
                "controllers": {k: sorted(v) for k, v in d.controllers.items()},
            }
            for d in ctx.devices
        ],
        "dns_bindings": {k: sorted(v) for k, v in ctx.dns_bindings.items()},
        "local_subnets": list(ctx.local_subnets),
        "gateway_ip": ctx.gateway_ip,
        "my_controller_bindings": {k: sorted(v) for k, v in ctx.my_controller_bindings.items()},
    }


def load_context(path) -> NetworkContext:
    with open(path, "r", encoding="utf-8") as fh:
        return context_from_dict(json.load(fh))
