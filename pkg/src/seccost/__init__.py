"""Runtime security-cost measurement for a simulated IoT local cloud."""

from .catalogue import (
    M1,
    M2,
    M3,
    M4,
    FakeResourceSource,
    NormalizationSpec,
    ProcessResourceSource,
    builtin_catalogue,
    fit_minmax,
    measure_task,
    to_cost_unit,
)
from .harness import ExperimentConfig, ExperimentReport, RunResult, WorkloadConfig, run_experiment, run_workload, x_P, x_SC
from .model import Category, ComponentId, CostQuery, CostSample, SampleStore, TaskKind, cost_breakdown, time_series, total_cost
from .tracer import DEFAULT_TAXONOMY, TaskTrace, TraceStore, Tracer

__version__ = "0.1.0"
