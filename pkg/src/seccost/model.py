"""Onion-layer cost aggregation over time-indexed cost samples.

A cost sample is one measured value for a (interaction, component, task,
metric) coordinate at a wall-clock instant.  The aggregation nests four sums
(interactions, their components, each component's tasks, each task's metrics)
restricted to a half-open time window and optional filters.  A single point in
time is the window ``[t, t + 1)``.

Values are summed in their native units here; making units comparable is the
job of :mod:`seccost.catalogue`.
"""

from __future__ import annotations

import bisect
import ipaddress
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

__all__ = [
    "Category",
    "ComponentId",
    "TaskKind",
    "CostSample",
    "CostQuery",
    "CostBreakdown",
    "SampleStore",
    "StoreClosedError",
    "append_sample",
    "total_cost",
    "cost_breakdown",
    "time_series",
    "validate_interaction_id",
    "ms_to_iso",
    "iso_to_ms",
]

MAX_INTERACTION_ID = 64
T_MAX = 2**62

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Category(str, Enum):
    SECURITY = "security-related"
    USE_CASE = "use-case-related"


def validate_interaction_id(value: str) -> str:
    if not isinstance(value, str) or not value:
        raise ValueError("interaction id must be a non-empty string")
    if len(value) > MAX_INTERACTION_ID:
        raise ValueError(f"interaction id longer than {MAX_INTERACTION_ID} chars: {value!r}")
    if any(ch.isspace() for ch in value):
        raise ValueError(f"interaction id must not contain whitespace: {value!r}")
    return value


@dataclass(frozen=True, order=True)
class ComponentId:
    name: str
    endpoint: tuple[str, int]

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ValueError(f"bad component name {self.name!r}")
        ip, port = self.endpoint
        ipaddress.IPv4Address(ip)
        if not (1 <= int(port) <= 65535):
            raise ValueError(f"port out of range: {port}")
        object.__setattr__(self, "endpoint", (str(ip), int(port)))

    @property
    def address(self) -> str:
        return f"{self.endpoint[0]}:{self.endpoint[1]}"

    @classmethod
    def parse(cls, name: str, address: str) -> "ComponentId":
        ip, _, port = address.rpartition(":")
        return cls(name, (ip, int(port)))


@dataclass(frozen=True, order=True)
class TaskKind:
    name: str
    category: Category

    def __post_init__(self):
        if not self.name:
            raise ValueError("task name must be non-empty")
        object.__setattr__(self, "category", Category(self.category))


@dataclass(frozen=True)
class CostSample:
    interaction: str
    component: ComponentId
    task: TaskKind
    metric: str
    t: int
    value: float


def ms_to_iso(t: int) -> str:
    """UTC milliseconds to ISO-8601 with millisecond precision (exact)."""
    dt = _EPOCH + timedelta(milliseconds=int(t))
    return dt.isoformat(timespec="milliseconds").replace("+00:00", "Z")


def iso_to_ms(text: str) -> int:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - _EPOCH) // timedelta(milliseconds=1)


def _frozen(values) -> frozenset | None:
    if values is None:
        return None
    if isinstance(values, (str, ComponentId)):
        values = [values]
    return frozenset(values)


@dataclass(frozen=True)
class CostQuery:
    """Selection of samples: a half-open window plus optional filters.

    ``None`` (or an empty collection) for a filter means "all".  ``category``
    of ``None`` means both categories.
    """

    t_start: int = 0
    t_end: int = T_MAX
    interactions: frozenset[str] | None = None
    components: frozenset[ComponentId] | None = None
    category: Category | None = None
    metrics: frozenset[str] | None = None

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise ValueError(f"t_start {self.t_start} > t_end {self.t_end}")
        for name in ("interactions", "components", "metrics"):
            v = _frozen(getattr(self, name))
            object.__setattr__(self, name, v or None)
        if self.category is not None:
            object.__setattr__(self, "category", Category(self.category))

    @classmethod
    def at(cls, t: int, **filters) -> "CostQuery":
        return cls(t, t + 1, **filters)

    def matches(self, s: CostSample) -> bool:
        if not (self.t_start <= s.t < self.t_end):
            return False
        if self.interactions is not None and s.interaction not in self.interactions:
            return False
        if self.components is not None and s.component not in self.components:
            return False
        if self.category is not None and s.task.category is not self.category:
            return False
        if self.metrics is not None and s.metric not in self.metrics:
            return False
        return True


@dataclass
class CostBreakdown:
    total: float = 0.0
    per_interaction: dict = field(default_factory=dict)
    per_component: dict = field(default_factory=dict)
    per_task: dict = field(default_factory=dict)
    per_metric: dict = field(default_factory=dict)

    def levels(self):
        return (self.per_interaction, self.per_component, self.per_task, self.per_metric)


class StoreClosedError(RuntimeError):
    pass


class SampleStore:
    """Append-only, thread-safe store of cost samples with a time index.

    Iteration yields insertion order.  Queries take a snapshot under the lock,
    so samples appended concurrently are either wholly in or wholly out.
    """

    def __init__(self, window: tuple[int, int] | None = None):
        self.window = window
        self._lock = threading.Lock()
        self._samples: list[CostSample] = []
        self._keys: list[tuple[int, int]] = []  # (t, seq), sorted
        self._by_interaction: dict[str, list[int]] = defaultdict(list)
        self._closed = False

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[CostSample]:
        with self._lock:
            snapshot = list(self._samples)
        return iter(snapshot)

    @property
    def closed(self) -> bool:
        return self._closed

    def close(self) -> None:
        self._closed = True

    def check(self, s: CostSample) -> None:
        validate_interaction_id(s.interaction)
        if not isinstance(s.component, ComponentId):
            raise ValueError(f"component must be a ComponentId, got {s.component!r}")
        if not isinstance(s.task, TaskKind):
            raise ValueError(f"task must be a TaskKind, got {s.task!r}")
        if not s.metric:
            raise ValueError("metric id must be non-empty")
        if not isinstance(s.value, (int, float)) or not math.isfinite(s.value):
            raise ValueError(f"sample value must be finite, got {s.value!r}")
        if s.value < 0:
            raise ValueError(f"native-unit sample value must be >= 0, got {s.value}")
        if self.window is not None and not (self.window[0] <= s.t < self.window[1]):
            raise ValueError(f"sample time {s.t} outside store window {self.window}")

    def append(self, s: CostSample) -> None:
        if self._closed:
            raise StoreClosedError("sample store is closed")
        self.check(s)
        with self._lock:
            key = (s.t, len(self._samples))
            self._samples.append(s)
            self._by_interaction[s.interaction].append(key[1])
            if not self._keys or key >= self._keys[-1]:
                self._keys.append(key)
            else:
                bisect.insort(self._keys, key)

    def extend(self, samples: Iterable[CostSample]) -> None:
        for s in samples:
            self.append(s)

    def in_window(self, t_start: int, t_end: int) -> list[CostSample]:
        """Samples with ``t_start <= t < t_end``, in time order."""
        with self._lock:
            lo = bisect.bisect_left(self._keys, (t_start, -1))
            hi = bisect.bisect_left(self._keys, (t_end, -1))
            return [self._samples[seq] for _, seq in self._keys[lo:hi]]

    def select(self, q: CostQuery) -> list[CostSample]:
        """Samples matching ``q``, in time order."""
        if q.interactions is not None and len(q.interactions) * 8 < len(self._by_interaction):
            with self._lock:
                seqs = [i for iid in q.interactions for i in self._by_interaction.get(iid, ())]
                found = sorted((self._samples[i].t, i) for i in seqs)
                candidates = [self._samples[i] for _, i in found]
            return [s for s in candidates if q.matches(s)]
        return [s for s in self.in_window(q.t_start, q.t_end) if q.matches(s)]

    # One sample per line, tab-separated, fields in CostSample order; the
    # component and task expand to (name, ip:port) and (name, category).
    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self:
                fh.write(
                    "\t".join(
                        (
                            s.interaction,
                            s.component.name,
                            s.component.address,
                            s.task.name,
                            s.task.category.value,
                            s.metric,
                            ms_to_iso(s.t),
                            repr(float(s.value)),
                        )
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "SampleStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 8:
                    raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
                iid, cname, caddr, tname, tcat, metric, ts, value = parts
                store.append(
                    CostSample(
                        iid,
                        ComponentId.parse(cname, caddr),
                        TaskKind(tname, Category(tcat)),
                        metric,
                        iso_to_ms(ts),
                        float(value),
                    )
                )
        return store


def append_sample(store: SampleStore, s: CostSample) -> None:
    store.append(s)


def total_cost(store: SampleStore, q: CostQuery) -> float:
    """Sum of sample values matching ``q`` (compensated summation)."""
    return math.fsum(s.value for s in store.select(q))


def cost_breakdown(store: SampleStore, q: CostQuery) -> CostBreakdown:
    groups = (defaultdict(list), defaultdict(list), defaultdict(list), defaultdict(list))
    values = []
    for s in store.select(q):
        keys = (
            s.interaction,
            (s.interaction, s.component),
            (s.interaction, s.component, s.task),
            (s.interaction, s.component, s.task, s.metric),
        )
        for g, k in zip(groups, keys):
            g[k].append(s.value)
        values.append(s.value)
    summed = [{k: math.fsum(v) for k, v in g.items()} for g in groups]
    return CostBreakdown(math.fsum(values), *summed)


def time_series(store: SampleStore, q: CostQuery, bucket_ms: int) -> list[tuple[int, float]]:
    """Partition ``[q.t_start, q.t_end)`` into buckets of ``bucket_ms``.

    The last bucket is truncated at ``t_end``.  Empty buckets are emitted as
    ``0.0``.
    """
    if int(bucket_ms) != bucket_ms or bucket_ms <= 0:
        raise ValueError(f"bucket_ms must be a positive integer, got {bucket_ms!r}")
    if q.t_end >= T_MAX:
        raise ValueError("time_series needs a bounded window")
    starts = list(range(q.t_start, q.t_end, bucket_ms))
    buckets: list[list[float]] = [[] for _ in starts]
    for s in store.select(q):
        buckets[(s.t - q.t_start) // bucket_ms].append(s.value)
    return [(t0, math.fsum(b)) for t0, b in zip(starts, buckets)]
