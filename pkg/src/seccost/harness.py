"""Experiment harness: workloads, per-run aggregation and the security differential.

A workload runs the closed-loop interaction ``runs`` times over one protocol
(``S`` secure, ``I`` insecure).  Per run the harness sums each metric over
that interaction's cost samples, then sums the metrics (``x_P``), both
literally in native units and in Cost Units after pooled min-max
normalization.  The security cost of run ``i`` is ``x_S(i) - x_I(i)``.
"""

from __future__ import annotations

import json
import math
import os
import platform
import statistics
import sys
import time
import uuid
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .catalogue import (
    METRIC_IDS,
    NormalizationSpec,
    ProcessResourceSource,
    fit_minmax,
    normalize,
    to_cost_unit,
)
from .channel import AEAD_OVERHEAD, ChannelConfig, Mode
from .cloud import AccessControlList, AccessRule
from .model import CostQuery, SampleStore, total_cost
from .testbed import RoomParams, Stores, Testbed, allocate_ports

__all__ = [
    "WorkloadConfig",
    "ExperimentConfig",
    "RunResult",
    "PairedCost",
    "ExperimentReport",
    "run_workload",
    "run_totals",
    "x_P",
    "x_P_cu",
    "x_SC",
    "environment_manifest",
    "run_experiment",
    "write_experiment",
    "replay",
    "SEED_ENV",
]

SEED_ENV = "SECCOST_SEED"


@dataclass(frozen=True)
class WorkloadConfig:
    id: str
    runs: int
    protocol: str
    metrics: tuple[str, ...] = METRIC_IDS
    loop_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "protocol", Mode(self.protocol).value)
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.runs < 1:
            raise ValueError("a workload needs at least one run")
        if not self.metrics or any(m not in METRIC_IDS for m in self.metrics):
            raise ValueError(f"metrics must be a non-empty subset of {METRIC_IDS}, got {self.metrics}")
        if self.loop_iterations < 1:
            raise ValueError("loop_iterations must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    workloads: tuple[WorkloadConfig, ...]
    acl: tuple[tuple[str, str], ...] = (("C2", "temperature"),)
    room: RoomParams = RoomParams()
    threshold_c: float = 25.0
    request_period_ms: int = 0
    psk: bytes | None = None
    ports: Mapping[str, int] = field(default_factory=dict)
    host: str = "127.0.0.1"

    def __post_init__(self):
        object.__setattr__(self, "workloads", tuple(self.workloads))
        object.__setattr__(self, "acl", tuple(tuple(r) for r in self.acl))
        if not self.workloads:
            raise ValueError("experiment needs at least one workload")
        if any(w.protocol == "S" for w in self.workloads) and (self.psk is None or len(self.psk) != 32):
            raise ValueError("secure workloads need a 32-byte pre-shared key (psk, hex)")

    @classmethod
    def table1(cls, runs: int = 50, seed: int = 0, psk: bytes | None = None, **kwargs) -> "ExperimentConfig":
        """The two-workload design: WL1 over S, WL2 over I, metrics M1-M4."""
        return cls(
            (WorkloadConfig("WL1", runs, "S", seed=seed), WorkloadConfig("WL2", runs, "I", seed=seed)),
            psk=psk if psk is not None else os.urandom(32),
            **kwargs,
        )

    def channel(self, protocol: str) -> ChannelConfig:
        mode = Mode(protocol)
        return ChannelConfig(mode, self.psk if mode is Mode.SECURE else None)

    def to_dict(self) -> dict:
        return {
            "workloads": [
                {**asdict(w), "metrics": list(w.metrics)} for w in self.workloads
            ],
            "acl": [list(r) for r in self.acl],
            "room": asdict(self.room),
            "threshold_c": self.threshold_c,
            "request_period_ms": self.request_period_ms,
            "psk": self.psk.hex() if self.psk else None,
            "ports": dict(self.ports),
            "host": self.host,
        }

    @classmethod
    def from_dict(cls, data: Mapping, env: Mapping[str, str] | None = None) -> "ExperimentConfig":
        env = os.environ if env is None else env
        seed_override = env.get(SEED_ENV)
        workloads = []
        for w in data["workloads"]:
            w = dict(w)
            if seed_override is not None:
                w["seed"] = int(seed_override)
            workloads.append(WorkloadConfig(**w))
        psk = data.get("psk")
        return cls(
            tuple(workloads),
            acl=tuple(tuple(r) for r in data.get("acl", [["C2", "temperature"]])),
            room=RoomParams(**data.get("room", {})),
            threshold_c=float(data.get("threshold_c", 25.0)),
            request_period_ms=int(data.get("request_period_ms", 0)),
            psk=bytes.fromhex(psk) if psk else None,
            ports={k: int(v) for k, v in data.get("ports", {}).items()},
            host=data.get("host", "127.0.0.1"),
        )

    @classmethod
    def load(cls, path: str | Path, env: Mapping[str, str] | None = None) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), env)


@dataclass(frozen=True)
class RunResult:
    workload: str
    run: int
    interaction: str
    protocol: str
    totals: Mapping[str, float]
    x_P_raw: float
    x_P_cu: float | None = None
    ok: bool = True
    reason: str = ""
    wall_ms: float = 0.0


@dataclass(frozen=True)
class PairedCost:
    run: int
    x_SC_cu: float
    x_SC_raw: float
    per_metric: Mapping[str, float]


@dataclass
class ExperimentReport:
    secure: str
    insecure: str
    runs: list[RunResult]
    pairs: list[PairedCost]
    cumulative_cu: float
    cumulative_raw: float
    normalization: NormalizationSpec
    manifest: dict = field(default_factory=dict)

    def results(self, workload: str) -> list[RunResult]:
        return [r for r in self.runs if r.workload == workload]

    @property
    def failures(self) -> list[RunResult]:
        return [r for r in self.runs if not r.ok]

    @property
    def mean_x_SC_cu(self) -> float:
        return self.cumulative_cu / len(self.pairs) if self.pairs else 0.0

    def summary(self) -> dict[str, dict[str, dict[str, float]]]:
        """Mean, min, max and sample stddev per workload and metric."""
        out = {}
        for wl in (self.secure, self.insecure):
            ok = [r for r in self.results(wl) if r.ok]
            metrics = dict.fromkeys(m for r in ok for m in r.totals)
            out[wl] = {}
            for m in metrics:
                xs = [r.totals[m] for r in ok]
                out[wl][m] = {
                    "mean": statistics.fmean(xs),
                    "min": min(xs),
                    "max": max(xs),
                    "stddev": statistics.stdev(xs) if len(xs) > 1 else 0.0,
                }
        return out


def run_totals(samples: SampleStore, interaction: str, metrics: Sequence[str]) -> dict[str, float]:
    """Per-metric sums over one interaction's samples, in native units."""
    return {m: total_cost(samples, CostQuery(interactions={interaction}, metrics={m})) for m in metrics}


def run_workload(
    cfg: WorkloadConfig,
    experiment: ExperimentConfig | None = None,
    *,
    stores: Stores | None = None,
    ports: Mapping[str, int] | None = None,
    source_factory=ProcessResourceSource,
) -> list[RunResult]:
    """Execute ``cfg.runs`` interactions sequentially on a fresh testbed.

    Run ``i`` seeds its room with ``cfg.seed + i`` so that workloads sharing a
    seed see identical room trajectories.
    """
    experiment = experiment or ExperimentConfig((cfg,), psk=os.urandom(32) if cfg.protocol == "S" else None)
    stores = stores if stores is not None else Stores()
    testbed = Testbed(
        experiment.channel(cfg.protocol),
        AccessControlList(AccessRule(*r) for r in experiment.acl),
        ports=dict(ports if ports is not None else experiment.ports),
        stores=stores,
        room=experiment.room,
        threshold_c=experiment.threshold_c,
        request_period_ms=experiment.request_period_ms,
        host=experiment.host,
        source_factory=source_factory,
    )
    results = []
    with testbed:
        for i in range(1, cfg.runs + 1):
            iid = uuid.uuid4().hex
            outcome, wall_ms = testbed.run_interaction(iid, cfg.seed + i, cfg.loop_iterations)
            totals = run_totals(stores.samples, iid, cfg.metrics)
            results.append(
                RunResult(cfg.id, i, iid, cfg.protocol, totals, math.fsum(totals.values()),
                          ok=outcome.ok, reason=outcome.reason, wall_ms=wall_ms)
            )
    return results


def _find(results: Sequence[RunResult], i: int) -> RunResult:
    for r in results:
        if r.run == i:
            return r
    raise KeyError(f"no run {i} in results")


def x_P(results: Sequence[RunResult], i: int, metrics: Sequence[str] | None = None) -> float:
    """Literal per-run aggregate: the plain sum of metric totals."""
    r = _find(results, i)
    metrics = metrics or list(r.totals)
    return math.fsum(r.totals[m] for m in metrics)


def x_P_cu(results: Sequence[RunResult], i: int, spec: NormalizationSpec) -> float:
    """Per-run aggregate in Cost Units."""
    return to_cost_unit(_find(results, i).totals, spec)


def x_SC(
    results_S: Sequence[RunResult],
    results_I: Sequence[RunResult],
    spec: NormalizationSpec | None = None,
    manifest: dict | None = None,
) -> ExperimentReport:
    """Pair run ``i`` of S with run ``i`` of I and take the differences.

    Normalization bounds are fitted on the pooled successful runs of both
    workloads unless ``spec`` is given.  Failed runs stay in the report but
    are not paired.
    """
    ok_S = {r.run: r for r in results_S if r.ok}
    ok_I = {r.run: r for r in results_I if r.ok}
    if not ok_S or not ok_I:
        raise ValueError("need at least one successful run in each workload")
    if spec is None:
        spec = fit_minmax([r.totals for r in (*ok_S.values(), *ok_I.values())])

    def priced(r: RunResult) -> RunResult:
        return replace(r, x_P_cu=to_cost_unit(r.totals, spec)) if r.ok else r

    runs = [priced(r) for r in (*results_S, *results_I)]
    by_key = {(r.workload, r.run): r for r in runs}
    wl_S, wl_I = results_S[0].workload, results_I[0].workload
    pairs = []
    for i in sorted(set(ok_S) & set(ok_I)):
        s, n = by_key[(wl_S, i)], by_key[(wl_I, i)]
        common = [m for m in s.totals if m in n.totals]
        pairs.append(
            PairedCost(i, s.x_P_cu - n.x_P_cu, s.x_P_raw - n.x_P_raw,
                       {m: s.totals[m] - n.totals[m] for m in common})
        )
    return ExperimentReport(
        wl_S,
        wl_I,
        runs,
        pairs,
        math.fsum(p.x_SC_cu for p in pairs),
        math.fsum(p.x_SC_raw for p in pairs),
        spec,
        dict(manifest or {}),
    )


def normalized_values(report: ExperimentReport, r: RunResult) -> dict[str, float]:
    return normalize(r.totals, report.normalization)


def environment_manifest(cpu_scope: str = "thread") -> dict:
    clocks = {}
    for name in ("monotonic", "time", "thread_time", "process_time"):
        try:
            clocks[name] = time.get_clock_info(name).resolution
        except ValueError:
            pass
    return {
        "host": platform.node(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "cpu_count": os.cpu_count(),
        "cpu_scope": cpu_scope,
        "clock_resolution_s": clocks,
        "aead_overhead_bytes": AEAD_OVERHEAD,
    }


def _pick_pair(config: ExperimentConfig) -> tuple[str, str]:
    secure = [w.id for w in config.workloads if w.protocol == "S"]
    insecure = [w.id for w in config.workloads if w.protocol == "I"]
    if secure and insecure:
        return secure[0], insecure[0]
    if len(config.workloads) >= 2:
        # Same protocol on both sides: a null experiment, first minus second.
        return config.workloads[0].id, config.workloads[1].id
    raise ValueError("need two workloads to form a differential")


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    source_factory=ProcessResourceSource,
) -> tuple[ExperimentReport, Stores]:
    """Run every workload sequentially on one set of ports, then compare.

    All workloads share the advertised ports so that frames differ between
    protocols only by the sealing overhead.
    """
    ports = dict(config.ports)
    missing = [n for n in ("IoT-Framework", "C1", "C2") if not ports.get(n)]
    if missing:
        ports.update({k: v for k, v in allocate_ports(config.host, missing).items()})
    stores = Stores()
    results: dict[str, list[RunResult]] = {}
    started = time.time()
    for wl in config.workloads:
        results[wl.id] = run_workload(wl, config, stores=stores, ports=ports, source_factory=source_factory)
    elapsed = time.time() - started
    a, b = _pick_pair(config)
    manifest = {
        "environment": environment_manifest(),
        "ports": ports,
        "elapsed_s": elapsed,
        "failures": [
            {"workload": r.workload, "run": r.run, "interaction": r.interaction, "reason": r.reason}
            for rs in results.values() for r in rs if not r.ok
        ],
    }
    report = x_SC(results[a], results[b], manifest=manifest)
    if out_dir is not None:
        write_experiment(Path(out_dir), config, report, stores, results)
    return report, stores


def write_experiment(out: Path, config: ExperimentConfig, report: ExperimentReport, stores: Stores,
                     results: Mapping[str, list[RunResult]]) -> None:
    from .report import export_report

    out.mkdir(parents=True, exist_ok=True)
    stores.samples.dump(out / "samples.tsv")
    stores.traces.dump(out / "traces.tsv")
    stores.records.dump(out / "records.tsv")
    report.normalization.dump(out / "normalization.txt")
    manifest = {
        "config": config.to_dict(),
        "pair": [report.secure, report.insecure],
        "runs": [
            {"workload": r.workload, "run": r.run, "interaction": r.interaction, "protocol": r.protocol,
             "metrics": list(r.totals), "ok": r.ok, "reason": r.reason, "wall_ms": r.wall_ms}
            for rs in results.values() for r in rs
        ],
        "report_manifest": report.manifest,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    export_report(report, out / "report.jsonl", "jsonl")
    export_report(report, out / "report.csv", "csv")


def replay(in_dir: str | Path) -> ExperimentReport:
    """Recompute the report from the stored samples and manifest alone."""
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text(encoding="utf-8"))
    samples = SampleStore.load(in_dir / "samples.tsv")
    results: dict[str, list[RunResult]] = {}
    for m in manifest["runs"]:
        totals = run_totals(samples, m["interaction"], m["metrics"])
        results.setdefault(m["workload"], []).append(
            RunResult(m["workload"], m["run"], m["interaction"], m["protocol"], totals,
                      math.fsum(totals.values()), ok=m["ok"], reason=m["reason"], wall_ms=m["wall_ms"])
        )
    a, b = manifest["pair"]
    return x_SC(results[a], results[b], manifest=manifest["report_manifest"])
