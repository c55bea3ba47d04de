"""The two-workload experiment: secure against insecure, paired per run.

Reads table1.json next to this file (override the seed with SECCOST_SEED),
writes the stores and report to ./table1-out and prints the headline numbers.
The same thing is available as ``seccost run --config demos/table1.json --out table1-out``.
"""

import sys
from pathlib import Path

from seccost import ExperimentConfig, run_experiment
from seccost.harness import replay

here = Path(__file__).parent
config = ExperimentConfig.load(here / "table1.json")
out = Path(sys.argv[1] if len(sys.argv) > 1 else "table1-out")

report, _ = run_experiment(config, out)

for wl, metrics in report.summary().items():
    print(wl, {m: f"{s['mean']:.4g} ± {s['stddev']:.2g}" for m, s in metrics.items()})
print(f"pairs: {len(report.pairs)}, failures: {len(report.failures)}")
print(f"cumulative x_SC: {report.cumulative_cu:.4f} CU, mean per run: {report.mean_x_SC_cu:.4f} CU")
print("M4 difference per run:", report.pairs[0].per_metric["M4"], "KB")

# Recomputing from the stored samples gives the same report.
print("replay matches:", replay(out) == report)
