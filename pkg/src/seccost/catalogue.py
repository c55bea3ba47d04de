"""Cost metric catalogue: M1-M4, resource probes and Cost Unit normalization."""

from __future__ import annotations

import math
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "M1",
    "M2",
    "M3",
    "M4",
    "METRIC_IDS",
    "Unit",
    "Sampler",
    "MetricDef",
    "builtin_catalogue",
    "ResourceProbe",
    "ProcessResourceSource",
    "FakeResourceSource",
    "UnsupportedPlatformError",
    "take_probe",
    "measure_task",
    "NormalizationSpec",
    "fit_minmax",
    "normalize",
    "to_cost_unit",
]

M1, M2, M3, M4 = "M1", "M2", "M3", "M4"
METRIC_IDS = (M1, M2, M3, M4)

KIB = 1024
MIB = 1024 * 1024


class Unit(str, Enum):
    MILLISECONDS = "ms"
    PERCENT = "%"
    MEGABYTES = "MB"
    KILOBYTES = "KB"
    COST_UNIT = "CU"


class Sampler(str, Enum):
    WALL_CLOCK = "wall-clock"
    CPU_PROBE = "cpu-probe"
    RAM_PROBE = "ram-probe"
    WIRE_BYTES = "wire-bytes"


@dataclass(frozen=True)
class MetricDef:
    id: str
    name: str
    unit: Unit
    sampler: Sampler


_BUILTIN = (
    MetricDef(M1, "duration", Unit.MILLISECONDS, Sampler.WALL_CLOCK),
    MetricDef(M2, "cpu-usage", Unit.PERCENT, Sampler.CPU_PROBE),
    MetricDef(M3, "ram-usage", Unit.MEGABYTES, Sampler.RAM_PROBE),
    MetricDef(M4, "packet-size", Unit.KILOBYTES, Sampler.WIRE_BYTES),
)


def builtin_catalogue() -> list[MetricDef]:
    return list(_BUILTIN)


# -- probes ------------------------------------------------------------------


@dataclass(frozen=True)
class ResourceProbe:
    cpu_time_ms: float
    rss_mb: float
    taken_at: int  # monotonic ns

    def __post_init__(self):
        if self.cpu_time_ms < 0 or self.rss_mb < 0:
            raise ValueError(f"negative probe reading: {self}")


class UnsupportedPlatformError(RuntimeError):
    pass


class _MonotonicStamp:
    """Monotonic ns clock that never repeats a value."""

    def __init__(self):
        self._lock = threading.Lock()
        self._last = 0

    def __call__(self) -> int:
        now = time.monotonic_ns()
        with self._lock:
            if now <= self._last:
                now = self._last + 1
            self._last = now
        return now


class ProcessResourceSource:
    """Reads CPU time and resident memory from the OS.

    ``cpu_scope="thread"`` (the default) reads the calling thread's CPU clock.
    All simulated components share one process, so process-wide CPU time
    would charge a task for work done concurrently by other components.
    Resident memory is only available per process.
    """

    def __init__(self, cpu_scope: str = "thread"):
        if cpu_scope not in ("thread", "process"):
            raise ValueError(f"cpu_scope must be 'thread' or 'process', got {cpu_scope!r}")
        try:
            import psutil

            self._proc = psutil.Process()
            self._proc.memory_info()
            if cpu_scope == "process":
                self._proc.cpu_times()
            else:
                time.thread_time_ns()
        except (ImportError, AttributeError, OSError, NotImplementedError) as exc:
            raise UnsupportedPlatformError(f"cannot read process statistics: {exc}") from exc
        self.cpu_scope = cpu_scope
        self._stamp = _MonotonicStamp()

    def _cpu_ms(self) -> float:
        if self.cpu_scope == "thread":
            return time.thread_time_ns() / 1e6
        t = self._proc.cpu_times()
        return (t.user + t.system) * 1e3

    def probe(self, closing: bool = False) -> ResourceProbe:
        # Read order nests the cheap clocks inside the /proc read on both
        # sides of a task, so neither M1 nor M2 pays for the RSS lookup.
        if closing:
            stamp = self._stamp()
            cpu = self._cpu_ms()
            rss = self._proc.memory_info().rss / MIB
        else:
            rss = self._proc.memory_info().rss / MIB
            cpu = self._cpu_ms()
            stamp = self._stamp()
        return ResourceProbe(cpu, rss, stamp)


class FakeResourceSource:
    """Deterministic resource source for tests.

    ``cpu_ms`` and ``rss_mb`` are either constants or sequences consumed one
    value per probe (the last value repeats).  Each probe advances the clock
    by ``step_ns``.
    """

    def __init__(self, cpu_ms=0.0, rss_mb=0.0, *, step_ns: int = 10_000_000, start_ns: int = 1_000_000_000):
        if step_ns <= 0:
            raise ValueError("step_ns must be positive")
        self._cpu = list(cpu_ms) if isinstance(cpu_ms, Sequence) else [cpu_ms]
        self._rss = list(rss_mb) if isinstance(rss_mb, Sequence) else [rss_mb]
        self.step_ns = step_ns
        self._now = start_ns
        self._count = 0
        self._lock = threading.Lock()

    def probe(self, closing: bool = False) -> ResourceProbe:
        with self._lock:
            i = self._count
            self._count += 1
            taken = self._now
            self._now += self.step_ns
        cpu = self._cpu[min(i, len(self._cpu) - 1)]
        rss = self._rss[min(i, len(self._rss) - 1)]
        return ResourceProbe(float(cpu), float(rss), taken)


def take_probe(source, closing: bool = False) -> ResourceProbe:
    """Probe ``source``; ``closing=True`` for the probe that ends a task."""
    return source.probe(closing=closing)


def measure_task(
    before: ResourceProbe,
    after: ResourceProbe,
    wire_bytes: int,
    cores: int | None = None,
) -> dict[str, float]:
    """Metric values for one task from the probes bracketing it.

    M1 is wall time in ms, M2 CPU time as a percentage of wall time clamped to
    ``[0, 100 * cores]``, M3 the resident-memory growth floored at zero and M4
    the attributed wire bytes in KB.
    """
    if after.taken_at <= before.taken_at:
        raise ValueError(f"non-monotonic probes: {before.taken_at} -> {after.taken_at}")
    if wire_bytes < 0 or int(wire_bytes) != wire_bytes:
        raise ValueError(f"wire_bytes must be a non-negative integer, got {wire_bytes!r}")
    cores = cores or os.cpu_count() or 1
    duration = (after.taken_at - before.taken_at) / 1e6
    cpu = 100.0 * (after.cpu_time_ms - before.cpu_time_ms) / duration
    return {
        M1: duration,
        M2: min(max(cpu, 0.0), 100.0 * cores),
        M3: max(after.rss_mb - before.rss_mb, 0.0),
        M4: int(wire_bytes) / KIB,
    }


# -- normalization -------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationSpec:
    per_metric_bounds: Mapping[str, tuple[float, float]]
    weights: Mapping[str, float] = field(default_factory=dict)
    scheme: str = "minmax"

    def __post_init__(self):
        if self.scheme != "minmax":
            raise ValueError(f"unknown normalization scheme {self.scheme!r}")
        bounds = {k: (float(lo), float(hi)) for k, (lo, hi) in self.per_metric_bounds.items()}
        for k, (lo, hi) in bounds.items():
            if not lo <= hi:
                raise ValueError(f"bounds for {k} have min > max: {(lo, hi)}")
        weights = {k: float(self.weights.get(k, 1.0)) for k in bounds}
        if any(w < 0 or not math.isfinite(w) for w in weights.values()):
            raise ValueError(f"weights must be finite and non-negative: {weights}")
        if bounds and not any(w > 0 for w in weights.values()):
            raise ValueError("at least one weight must be positive")
        object.__setattr__(self, "per_metric_bounds", bounds)
        object.__setattr__(self, "weights", weights)

    def to_text(self) -> str:
        lines = [f"# scheme={self.scheme}", "# metric\tmin\tmax\tweight"]
        for k, (lo, hi) in self.per_metric_bounds.items():
            lines.append(f"{k}\t{lo!r}\t{hi!r}\t{self.weights[k]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NormalizationSpec":
        scheme = "minmax"
        bounds, weights = {}, {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("scheme="):
                    scheme = line.split("=", 1)[1].strip()
                continue
            metric, lo, hi, w = line.split("\t")
            bounds[metric] = (float(lo), float(hi))
            weights[metric] = float(w)
        return cls(bounds, weights, scheme)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NormalizationSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def fit_minmax(
    population: Iterable[Mapping[str, float]],
    weights: Mapping[str, float] | None = None,
) -> NormalizationSpec:
    """Per-metric (min, max) over every vector in ``population``."""
    population = list(population)
    if not population:
        raise ValueError("cannot fit normalization bounds on an empty population")
    bounds: dict[str, tuple[float, float]] = {}
    for vec in population:
        for k, v in vec.items():
            lo, hi = bounds.get(k, (v, v))
            bounds[k] = (min(lo, v), max(hi, v))
    return NormalizationSpec(bounds, dict(weights or {}))


def normalize(values: Mapping[str, float], spec: NormalizationSpec) -> dict[str, float]:
    """Per-metric min-max scores; a degenerate metric (min == max) scores 0."""
    out = {}
    for k, v in values.items():
        try:
            lo, hi = spec.per_metric_bounds[k]
        except KeyError:
            raise KeyError(f"no normalization bounds for metric {k}") from None
        out[k] = (v - lo) / (hi - lo) if hi > lo else 0.0
    return out


def to_cost_unit(values: Mapping[str, float], spec: NormalizationSpec) -> float:
    norm = normalize(values, spec)
    return math.fsum(spec.weights[k] * v for k, v in norm.items())
