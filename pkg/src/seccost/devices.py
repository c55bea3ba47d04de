"""The two CPS components and the room they sense and cool.

C1 (:class:`TemperatureSensor`) serves temperature readings of a simulated
room.  C2 (:class:`AirConditioningController`) discovers C1 through the local
cloud, polls it in a loop and switches the air conditioning when a reading is
above the threshold.
"""

from __future__ import annotations

import contextlib
import math
import random
import threading
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

from ._server import FrameServer
from .channel import ChannelConfig, ChannelError, open_channel
from .framing import Frame, FrameError, decode_kv, encode_kv
from .model import ComponentId

__all__ = [
    "SENSOR_NAME",
    "CONTROLLER_NAME",
    "SERVICE_NAME",
    "RoomModel",
    "ControllerPolicy",
    "InteractionOutcome",
    "RegistrationError",
    "TemperatureSensor",
    "AirConditioningController",
    "format_temperature",
    "run_sensor",
    "run_controller",
]

SENSOR_NAME = "C1"
CONTROLLER_NAME = "C2"
SERVICE_NAME = "temperature"


@dataclass
class RoomModel:
    """First-order room: each tick adds the heat gain, subtracts the cooling
    while the AC runs, and adds uniform noise in ``[-noise_c, +noise_c]``.

    :meth:`sample` returns the current temperature and owes one tick, which is
    applied at the next sample.  The AC state set between two samples is
    therefore the one in force for the interval between them.
    """

    temperature_c: float
    heat_gain_c_per_tick: float = 0.2
    cooling_c_per_tick: float = 1.0
    ac_on: bool = False
    rng_seed: int = 0
    noise_c: float = 0.05
    _rng: random.Random = field(init=False, repr=False)
    _owed: bool = field(default=False, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.heat_gain_c_per_tick <= 0 or self.cooling_c_per_tick <= 0:
            raise ValueError("heat gain and cooling must be positive")
        if self.noise_c < 0 or not math.isfinite(self.temperature_c):
            raise ValueError("bad room parameters")
        self._rng = random.Random(self.rng_seed)

    def tick(self) -> float:
        with self._lock:
            return self._tick()

    def _tick(self) -> float:
        delta = self.heat_gain_c_per_tick - (self.cooling_c_per_tick if self.ac_on else 0.0)
        noise = self._rng.uniform(-self.noise_c, self.noise_c) if self.noise_c else 0.0
        self.temperature_c += delta + noise
        return self.temperature_c

    def sample(self) -> float:
        with self._lock:
            if self._owed:
                self._tick()
            self._owed = True
            return self.temperature_c

    def set_ac(self, on: bool) -> None:
        with self._lock:
            self.ac_on = bool(on)


@dataclass(frozen=True)
class ControllerPolicy:
    threshold_c: float = 25.0
    loop_iterations: int = 10
    request_period_ms: int = 0

    def __post_init__(self):
        if not math.isfinite(self.threshold_c):
            raise ValueError("threshold must be finite")
        if self.loop_iterations < 1:
            raise ValueError("loop_iterations must be >= 1")
        if self.request_period_ms < 0:
            raise ValueError("request_period_ms must be >= 0")


@dataclass
class InteractionOutcome:
    interaction: str
    ok: bool
    readings: list[tuple[float, bool]] = field(default_factory=list)
    reason: str = ""
    provider: ComponentId | None = None


class RegistrationError(RuntimeError):
    pass


def format_temperature(t: float) -> str:
    return f"{t:.1f}"


@contextlib.contextmanager
def _traced(tracer, interaction, task_name):
    if tracer is None:
        yield SimpleNamespace(wire_bytes=0)
    else:
        with tracer.task(interaction, task_name) as token:
            yield token


class TemperatureSensor(FrameServer):
    """C1: answers ``MEASURE_REQUEST`` with the room temperature in degrees C."""

    name = SENSOR_NAME

    def __init__(self, room: RoomModel, config: ChannelConfig, *, tracer=None, host="127.0.0.1", port=0,
                 advertised: ComponentId | None = None):
        super().__init__(config, tracer, host, port)
        self.room = room
        self.component = advertised or ComponentId(self.name, self.address)

    def handle(self, frame: Frame, channel) -> Frame:
        if frame.message_type != "MEASURE_REQUEST":
            return Frame("ERROR", frame.interaction, self.name, f"unexpected {frame.message_type}".encode())
        with _traced(self.tracer, frame.interaction, "measure-temperature") as t:
            reading = format_temperature(self.room.sample())
            reply = Frame("MEASURE_RESPONSE", frame.interaction, self.name, reading.encode("ascii"))
            t.wire_bytes = frame.size + reply.size
        return reply

    def register(self, cloud: tuple[str, int], interaction: str, timeout: float = 10.0) -> None:
        """Register this sensor's advertised endpoint with the local cloud."""
        payload = encode_kv(
            {"service": SERVICE_NAME, "provider": self.component.name, "endpoint": self.component.address}
        )
        with open_channel(self.config, cloud, sender=self.name, interaction=interaction,
                          tracer=self.tracer, timeout=timeout) as ch:
            reply = ch.request(Frame("REGISTER", interaction, self.name, payload))
        if reply.message_type != "REGISTER_OK":
            raise RegistrationError(reply.payload.decode("utf-8", "replace"))


class AirConditioningController:
    """C2: discovery, then a polling loop that decides and actuates."""

    name = CONTROLLER_NAME

    def __init__(self, component: ComponentId, policy: ControllerPolicy, config: ChannelConfig, actuator, *,
                 tracer=None, timeout: float = 10.0):
        self.component = component
        self.policy = policy
        self.config = config
        self.actuator = actuator
        self.tracer = tracer
        self.timeout = timeout

    def _open(self, peer, interaction):
        return open_channel(self.config, peer, sender=self.name, interaction=interaction,
                            tracer=self.tracer, timeout=self.timeout)

    def discover(self, cloud: tuple[str, int], interaction: str) -> ComponentId:
        with self._open(cloud, interaction) as ch:
            with _traced(self.tracer, interaction, "discover"):
                request = Frame("ORCH_REQUEST", interaction, self.name,
                                encode_kv({"consumer": self.name, "service": SERVICE_NAME}))
            reply = ch.request(request)
        if reply.message_type != "ORCH_RESPONSE":
            raise ChannelError(f"discovery failed: {reply.payload.decode('utf-8', 'replace')}")
        kv = decode_kv(reply.payload)
        return ComponentId.parse(kv["provider"], kv["endpoint"])

    def run(self, cloud: tuple[str, int], interaction: str) -> InteractionOutcome:
        outcome = InteractionOutcome(interaction, ok=False)
        try:
            provider = outcome.provider = self.discover(cloud, interaction)
            with self._open(provider.endpoint, interaction) as ch:
                for k in range(self.policy.loop_iterations):
                    if k and self.policy.request_period_ms:
                        time.sleep(self.policy.request_period_ms / 1000)
                    with _traced(self.tracer, interaction, "request-temperature"):
                        request = Frame("MEASURE_REQUEST", interaction, self.name, b"celsius")
                    reply = ch.request(request)
                    if reply.message_type != "MEASURE_RESPONSE":
                        raise ChannelError(f"measurement failed: {reply.payload.decode('utf-8', 'replace')}")
                    with _traced(self.tracer, interaction, "decide-actuate"):
                        reading = float(reply.payload.decode("ascii"))
                        on = reading > self.policy.threshold_c
                        self.actuator.set_ac(on)
                    outcome.readings.append((reading, on))
        except (OSError, FrameError, ValueError, KeyError) as exc:
            outcome.reason = f"{type(exc).__name__}: {exc}"
            return outcome
        outcome.ok = True
        return outcome


def run_sensor(room: RoomModel, config: ChannelConfig, **kwargs) -> TemperatureSensor:
    return TemperatureSensor(room, config, **kwargs).start()


def run_controller(component: ComponentId, policy: ControllerPolicy, config: ChannelConfig, actuator,
                   cloud: tuple[str, int], interaction: str, **kwargs) -> InteractionOutcome:
    return AirConditioningController(component, policy, config, actuator, **kwargs).run(cloud, interaction)
