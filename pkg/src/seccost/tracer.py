"""Task tracing: categorized, measured records of every task a component runs."""

from __future__ import annotations

import contextlib
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .catalogue import METRIC_IDS, M1, ResourceProbe, measure_task
from .model import (
    Category,
    ComponentId,
    CostSample,
    SampleStore,
    TaskKind,
    iso_to_ms,
    ms_to_iso,
    validate_interaction_id,
)

__all__ = [
    "SECURITY_TASKS",
    "USE_CASE_TASKS",
    "TaskTaxonomy",
    "DEFAULT_TAXONOMY",
    "UnknownTaskError",
    "TaskTrace",
    "TraceStore",
    "OpenTask",
    "Tracer",
    "security_tasks",
    "use_case_tasks",
]

SECURITY_TASKS = ("authorise", "handshake", "encrypt", "decrypt")
USE_CASE_TASKS = (
    "register",
    "discover",
    "lookup",
    "request-temperature",
    "measure-temperature",
    "decide-actuate",
)


class UnknownTaskError(ValueError):
    pass


class TaskTaxonomy:
    """Closed map from task name to category."""

    def __init__(self, entries: Mapping[str, Category]):
        self.entries = {name: Category(cat) for name, cat in entries.items()}
        if any(not name for name in self.entries):
            raise ValueError("task names must be non-empty")

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def kind(self, name: str) -> TaskKind:
        try:
            return TaskKind(name, self.entries[name])
        except KeyError:
            raise UnknownTaskError(f"task {name!r} is not in the taxonomy") from None


DEFAULT_TAXONOMY = TaskTaxonomy(
    {
        **{name: Category.SECURITY for name in SECURITY_TASKS},
        **{name: Category.USE_CASE for name in USE_CASE_TASKS},
    }
)


@dataclass(frozen=True)
class TaskTrace:
    task: TaskKind
    component: ComponentId
    interaction: str
    start_monotonic_ns: int
    end_monotonic_ns: int
    start_wall_utc_ms: int
    metrics: Mapping[str, float]
    wire_bytes: int = 0

    def __post_init__(self):
        if self.end_monotonic_ns <= self.start_monotonic_ns:
            raise ValueError("task must end after it starts")
        if M1 not in self.metrics:
            raise ValueError("task trace must carry M1")

    @property
    def category(self) -> Category:
        return self.task.category


class TraceStore:
    """Thread-safe append-only list of task traces."""

    def __init__(self):
        self._lock = threading.Lock()
        self._traces: list[TaskTrace] = []

    def append(self, trace: TaskTrace) -> None:
        with self._lock:
            self._traces.append(trace)

    def __len__(self) -> int:
        return len(self._traces)

    def __iter__(self) -> Iterator[TaskTrace]:
        with self._lock:
            return iter(list(self._traces))

    def for_interaction(self, interaction: str) -> list[TaskTrace]:
        found = [t for t in self if t.interaction == interaction]
        return sorted(found, key=lambda t: t.start_monotonic_ns)

    def interactions(self) -> list[str]:
        return list(dict.fromkeys(t.interaction for t in self))

    # Same layout as the sample store: tab-separated, one trace per line.
    # Metrics are written as metric=value pairs joined by commas.
    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self:
                metrics = ",".join(f"{k}={v!r}" for k, v in t.metrics.items())
                fh.write(
                    "\t".join(
                        (
                            t.interaction,
                            t.component.name,
                            t.component.address,
                            t.task.name,
                            t.task.category.value,
                            str(t.start_monotonic_ns),
                            str(t.end_monotonic_ns),
                            ms_to_iso(t.start_wall_utc_ms),
                            metrics,
                            str(t.wire_bytes),
                        )
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "TraceStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                iid, cname, caddr, tname, tcat, s, e, wall, metrics, wire = line.split("\t")
                store.append(
                    TaskTrace(
                        TaskKind(tname, Category(tcat)),
                        ComponentId.parse(cname, caddr),
                        iid,
                        int(s),
                        int(e),
                        iso_to_ms(wall),
                        {k: float(v) for k, v in (kv.split("=") for kv in metrics.split(","))},
                        int(wire),
                    )
                )
        return store


@dataclass
class OpenTask:
    kind: TaskKind
    interaction: str
    probe: ResourceProbe
    start_wall_utc_ms: int
    wire_bytes: int = 0
    ended: bool = field(default=False, repr=False)

    @property
    def category(self) -> Category:
        return self.kind.category


class Tracer:
    """Per-component instrumentation surface.

    Every ended task lands in ``traces`` and is mirrored into ``samples`` as
    one cost sample per metric, all stamped with the task's start time.
    """

    def __init__(
        self,
        component: ComponentId,
        source,
        *,
        traces: TraceStore | None = None,
        samples: SampleStore | None = None,
        taxonomy: TaskTaxonomy = DEFAULT_TAXONOMY,
        metrics=METRIC_IDS,
        cores: int | None = None,
    ):
        if M1 not in metrics:
            raise ValueError("tracer metric set must include M1")
        self.component = component
        self.source = source
        self.traces = traces if traces is not None else TraceStore()
        self.samples = samples if samples is not None else SampleStore()
        self.taxonomy = taxonomy
        self.metrics = tuple(metrics)
        self.cores = cores
        self._lock = threading.Lock()

    def begin_task(self, interaction: str, task_name: str) -> OpenTask:
        kind = self.taxonomy.kind(task_name)
        validate_interaction_id(interaction)
        wall = time.time_ns() // 1_000_000
        return OpenTask(kind, interaction, self.source.probe(), wall)

    def end_task(self, token: OpenTask, wire_bytes: int | None = None) -> TaskTrace:
        after = self.source.probe(closing=True)
        with self._lock:
            if token.ended:
                raise RuntimeError(f"task {token.kind.name!r} already ended")
            token.ended = True
        if wire_bytes is None:
            wire_bytes = token.wire_bytes
        measured = measure_task(token.probe, after, wire_bytes, self.cores)
        trace = TaskTrace(
            token.kind,
            self.component,
            token.interaction,
            token.probe.taken_at,
            after.taken_at,
            token.start_wall_utc_ms,
            {m: measured[m] for m in self.metrics},
            int(wire_bytes),
        )
        self.traces.append(trace)
        for m in self.metrics:
            self.samples.append(
                CostSample(
                    trace.interaction,
                    trace.component,
                    trace.task,
                    m,
                    trace.start_wall_utc_ms,
                    trace.metrics[m],
                )
            )
        return trace

    @contextlib.contextmanager
    def task(self, interaction: str, task_name: str):
        """Trace the enclosed block; set ``token.wire_bytes`` inside it.

        The task is ended even when the block raises: the work was performed.
        """
        token = self.begin_task(interaction, task_name)
        try:
            yield token
        finally:
            self.end_task(token)


def security_tasks(traces: TraceStore, interaction: str) -> list[TaskTrace]:
    return [t for t in traces.for_interaction(interaction) if t.category is Category.SECURITY]


def use_case_tasks(traces: TraceStore, interaction: str) -> list[TaskTrace]:
    return [t for t in traces.for_interaction(interaction) if t.category is Category.USE_CASE]
