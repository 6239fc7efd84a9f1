"""Minimal in-process message bus with MQTT-style topic matching.

Stands in for the home broker at desk scale: QoS-1-like in the sense that
every published message is delivered to every matching subscriber exactly
once, in publish order.
"""

from __future__ import annotations

from typing import Callable


def topic_matches(pattern: str, topic: str) -> bool:
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    for i, p in enumerate(p_parts):
        if p == "#":
            return True
        if i >= len(t_parts):
            return False
        if p != "+" and p != t_parts[i]:
            return False
    return len(p_parts) == len(t_parts)


class InMemoryBus:
    def __init__(self):
        self._subs: list[tuple[str, Callable[[str, str], None]]] = []
        self.history: list[tuple[str, str]] = []

    def subscribe(self, pattern: str, callback: Callable[[str, str], None]) -> None:
        self._subs.append((pattern, callback))

    def publish(self, topic: str, payload: str) -> None:
        self.history.append((topic, payload))
        for pattern, cb in list(self._subs):
            if topic_matches(pattern, topic):
                cb(topic, payload)
