"""Loopback topology for one workload: cloud, C1, C2 and the monitor proxies.

::

    C2 ──> proxy[IoT-Framework] ──> LocalCloud
    C1 ──> proxy[IoT-Framework] ──> LocalCloud
    C2 ──> proxy[C1] ──────────────> TemperatureSensor

Components advertise the proxy endpoints, so every inter-component frame
passes a monitor.
"""

from __future__ import annotations

import gc
import socket
import time
from dataclasses import dataclass, field

from .catalogue import ProcessResourceSource
from .channel import ChannelConfig
from .cloud import FRAMEWORK_NAME, AccessControlList, LocalCloud
from .devices import (
    CONTROLLER_NAME,
    SENSOR_NAME,
    AirConditioningController,
    ControllerPolicy,
    InteractionOutcome,
    RoomModel,
    TemperatureSensor,
)
from .model import ComponentId, SampleStore
from .monitor import ProxyBinding, RecordSink, spawn_proxy
from .tracer import TraceStore, Tracer

__all__ = ["Stores", "RoomParams", "Testbed", "allocate_ports"]


@dataclass
class Stores:
    samples: SampleStore = field(default_factory=SampleStore)
    traces: TraceStore = field(default_factory=TraceStore)
    records: RecordSink = field(default_factory=RecordSink)


@dataclass(frozen=True)
class RoomParams:
    initial_c: float = 27.0
    heat_gain_c_per_tick: float = 0.2
    cooling_c_per_tick: float = 1.0
    noise_c: float = 0.05

    def room(self, seed: int) -> RoomModel:
        return RoomModel(self.initial_c, self.heat_gain_c_per_tick, self.cooling_c_per_tick,
                         rng_seed=seed, noise_c=self.noise_c)


def allocate_ports(host: str, names=(FRAMEWORK_NAME, SENSOR_NAME, CONTROLLER_NAME)) -> dict[str, int]:
    """Pick free ports for the advertised endpoints (0 in the config)."""
    socks, ports = [], {}
    try:
        for name in names:
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.bind((host, 0))
            socks.append(s)
            ports[name] = s.getsockname()[1]
    finally:
        for s in socks:
            s.close()
    return ports


class Testbed:
    def __init__(
        self,
        channel: ChannelConfig,
        acl: AccessControlList,
        *,
        ports: dict[str, int] | None = None,
        stores: Stores | None = None,
        room: RoomParams = RoomParams(),
        threshold_c: float = 25.0,
        request_period_ms: int = 0,
        host: str = "127.0.0.1",
        source_factory=ProcessResourceSource,
    ):
        self.channel = channel
        self.acl = acl
        self.ports = dict(ports or {})
        self.stores = stores or Stores()
        self.room_params = room
        self.threshold_c = threshold_c
        self.request_period_ms = request_period_ms
        self.host = host
        self.source_factory = source_factory
        self._started = False

    def _tracer(self, component: ComponentId) -> Tracer:
        return Tracer(component, self.source_factory(), traces=self.stores.traces, samples=self.stores.samples)

    def start(self) -> "Testbed":
        sink = self.stores.records
        self.cloud = LocalCloud(self.channel, self.acl, host=self.host)
        self.cloud_proxy = spawn_proxy(
            ProxyBinding((self.host, self.ports.get(FRAMEWORK_NAME, 0)), self.cloud.address, FRAMEWORK_NAME), sink
        )
        self.sensor = TemperatureSensor(self.room_params.room(0), self.channel, host=self.host)
        self.sensor_proxy = spawn_proxy(
            ProxyBinding((self.host, self.ports.get(SENSOR_NAME, 0)), self.sensor.address, SENSOR_NAME), sink
        )
        # C2 only connects out; hold its identity port so it stays unique.
        self._c2_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._c2_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._c2_sock.bind((self.host, self.ports.get(CONTROLLER_NAME, 0)))

        self.framework_id = ComponentId(FRAMEWORK_NAME, self.cloud_proxy.address)
        self.sensor_id = ComponentId(SENSOR_NAME, self.sensor_proxy.address)
        self.controller_id = ComponentId(CONTROLLER_NAME, self._c2_sock.getsockname())
        self.ports = {
            FRAMEWORK_NAME: self.framework_id.endpoint[1],
            SENSOR_NAME: self.sensor_id.endpoint[1],
            CONTROLLER_NAME: self.controller_id.endpoint[1],
        }

        self.cloud.tracer = self._tracer(self.framework_id)
        self.sensor.tracer = self._tracer(self.sensor_id)
        self.sensor.component = self.sensor_id
        self.controller_tracer = self._tracer(self.controller_id)
        self.cloud.start()
        self.sensor.start()
        self._started = True
        return self

    def stop(self) -> None:
        if not self._started:
            return
        self._started = False
        self.sensor_proxy.stop()
        self.cloud_proxy.stop()
        self.sensor.stop()
        self.cloud.stop()
        self._c2_sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def cloud_endpoint(self) -> tuple[str, int]:
        return self.framework_id.endpoint

    def run_interaction(self, interaction: str, seed: int, loop_iterations: int = 10) -> tuple[InteractionOutcome, float]:
        """Steps 1-8 once; returns the outcome and the end-to-end wall time in ms."""
        room = self.room_params.room(seed)
        self.sensor.room = room
        policy = ControllerPolicy(self.threshold_c, loop_iterations, self.request_period_ms)
        controller = AirConditioningController(self.controller_id, policy, self.channel, room,
                                               tracer=self.controller_tracer)
        # Collect between interactions, never inside one.
        gc.collect()
        gc_was_enabled = gc.isenabled()
        gc.disable()
        t0 = time.monotonic_ns()
        try:
            self.sensor.register(self.cloud_endpoint, interaction)
        except (OSError, RuntimeError, ValueError) as exc:
            outcome = InteractionOutcome(interaction, ok=False, reason=f"registration: {type(exc).__name__}: {exc}")
        else:
            outcome = controller.run(self.cloud_endpoint, interaction)
        finally:
            wall_ms = (time.monotonic_ns() - t0) / 1e6
            if gc_was_enabled:
                gc.enable()
        return outcome, wall_ms
