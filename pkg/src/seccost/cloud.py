"""Minimal IoT local cloud: service registry, authorisation and orchestration.

One listening service handles three kinds of request.  ``REGISTER`` puts a
provider into the registry.  ``ORCH_REQUEST`` authorises the consumer and,
only if that succeeds, searches the registry and returns the provider's
endpoint.
"""

from __future__ import annotations

import contextlib
import threading
import time
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Iterable

from ._server import FrameServer
from .channel import ChannelConfig
from .framing import Frame, FrameError, decode_kv, encode_kv
from .model import ComponentId

__all__ = [
    "FRAMEWORK_NAME",
    "ServiceRegistration",
    "AccessRule",
    "ServiceRegistry",
    "AccessControlList",
    "register",
    "authorise",
    "orchestrate",
    "LocalCloud",
]

FRAMEWORK_NAME = "IoT-Framework"


@dataclass(frozen=True)
class ServiceRegistration:
    service_name: str
    provider: ComponentId
    registered_at: int  # UTC ms


@dataclass(frozen=True)
class AccessRule:
    consumer: str
    service_name: str


class ServiceRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, ComponentId], ServiceRegistration] = {}

    def register(self, reg: ServiceRegistration) -> ServiceRegistration:
        """Add or refresh a registration; one entry per (service, provider)."""
        with self._lock:
            self._entries[(reg.service_name, reg.provider)] = reg
        return reg

    def search(self, service_name: str) -> list[ComponentId]:
        """Providers of ``service_name`` in order of first registration."""
        with self._lock:
            return [p for (name, p) in self._entries if name == service_name]

    def __len__(self) -> int:
        return len(self._entries)


class AccessControlList:
    def __init__(self, rules: Iterable[AccessRule | tuple[str, str]] = ()):
        self._rules = frozenset(r if isinstance(r, AccessRule) else AccessRule(*r) for r in rules)

    def authorise(self, consumer: str, service_name: str) -> bool:
        return AccessRule(consumer, service_name) in self._rules

    @property
    def rules(self) -> frozenset[AccessRule]:
        return self._rules


def register(registry: ServiceRegistry, reg: ServiceRegistration) -> ServiceRegistration:
    return registry.register(reg)


def authorise(acl: AccessControlList, consumer: str, service_name: str) -> bool:
    return acl.authorise(consumer, service_name)


@contextlib.contextmanager
def _traced(tracer, interaction, task_name):
    if tracer is None:
        yield SimpleNamespace(wire_bytes=0)
    else:
        with tracer.task(interaction, task_name) as token:
            yield token


def orchestrate(
    registry: ServiceRegistry,
    acl: AccessControlList,
    consumer: str,
    service_name: str,
    *,
    interaction: str = "local",
    sender: str = FRAMEWORK_NAME,
    tracer=None,
    request_size: int = 0,
) -> Frame:
    """Authorise, then look up a provider; returns the reply frame.

    The request and reply frame sizes are charged to the last task run: the
    lookup, or the authorisation when it refuses.
    """
    with _traced(tracer, interaction, "authorise") as t:
        allowed = acl.authorise(consumer, service_name)
        if not allowed:
            reply = Frame("ERROR", interaction, sender, b"not authorised")
            t.wire_bytes = request_size + reply.size
    if not allowed:
        return reply
    with _traced(tracer, interaction, "lookup") as t:
        providers = registry.search(service_name)
        if providers:
            p = providers[0]
            payload = encode_kv({"provider": p.name, "endpoint": p.address})
            reply = Frame("ORCH_RESPONSE", interaction, sender, payload)
        else:
            reply = Frame("ERROR", interaction, sender, b"no provider")
        t.wire_bytes = request_size + reply.size
    return reply


class LocalCloud(FrameServer):
    """The IoT framework as a single network service."""

    name = FRAMEWORK_NAME

    def __init__(self, config: ChannelConfig, acl: AccessControlList, *, tracer=None,
                 registry: ServiceRegistry | None = None, host="127.0.0.1", port=0):
        super().__init__(config, tracer, host, port)
        self.acl = acl
        self.registry = registry if registry is not None else ServiceRegistry()

    def handle(self, frame: Frame, channel) -> Frame:
        iid = frame.interaction
        if frame.message_type == "REGISTER":
            with _traced(self.tracer, iid, "register") as t:
                reply = self._register(frame)
                t.wire_bytes = frame.size + reply.size
            return reply
        if frame.message_type == "ORCH_REQUEST":
            try:
                req = decode_kv(frame.payload)
                consumer, service = req["consumer"], req["service"]
            except (KeyError, FrameError, UnicodeDecodeError):
                return Frame("ERROR", iid, self.name, b"malformed orchestration request")
            return orchestrate(self.registry, self.acl, consumer, service, interaction=iid,
                               sender=self.name, tracer=self.tracer, request_size=frame.size)
        return Frame("ERROR", iid, self.name, f"unexpected {frame.message_type}".encode())

    def _register(self, frame: Frame) -> Frame:
        iid = frame.interaction
        try:
            req = decode_kv(frame.payload)
            provider = ComponentId.parse(req["provider"], req["endpoint"])
            service = req["service"]
            if not service:
                raise ValueError("empty service name")
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            return Frame("ERROR", iid, self.name, f"malformed registration: {exc}".encode())
        self.registry.register(ServiceRegistration(service, provider, time.time_ns() // 1_000_000))
        return Frame("REGISTER_OK", iid, self.name, encode_kv({"service": service, "provider": provider.name}))
