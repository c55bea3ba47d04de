"""Report serialization: CSV rows per (workload, run, metric) and a lossless JSON-lines form."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .catalogue import NormalizationSpec, normalize
from .harness import ExperimentReport, PairedCost, RunResult

__all__ = ["CSV_COLUMNS", "report_rows", "export_report", "import_report", "read_csv_rows"]

CSV_COLUMNS = ("workload", "run", "metric", "raw_value", "normalized_value", "x_P_raw", "x_P_cu", "x_SC_cu")


def report_rows(report: ExperimentReport) -> list[tuple]:
    """One row per metric of every successful run; x_SC_cu is None if unpaired."""
    pairs = {p.run: p.x_SC_cu for p in report.pairs}
    rows = []
    for r in report.runs:
        if not r.ok:
            continue
        norm = normalize(r.totals, report.normalization)
        for m, raw in r.totals.items():
            rows.append((r.workload, r.run, m, raw, norm[m], r.x_P_raw, r.x_P_cu, pairs.get(r.run)))
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def read_csv_rows(path: str | Path) -> list[tuple]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        for wl, run, m, raw, norm, xr, xcu, xsc in reader:
            rows.append((wl, int(run), m, float(raw), float(norm), float(xr),
                         float(xcu) if xcu else None, float(xsc) if xsc else None))
    return rows


def _run_to_json(r: RunResult) -> dict:
    return {"kind": "run", "workload": r.workload, "run": r.run, "interaction": r.interaction,
            "protocol": r.protocol, "totals": dict(r.totals), "x_P_raw": r.x_P_raw, "x_P_cu": r.x_P_cu,
            "ok": r.ok, "reason": r.reason, "wall_ms": r.wall_ms}


def export_report(report: ExperimentReport, path: str | Path, format: str = "csv") -> Path:
    path = Path(path)
    try:
        if format == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for row in report_rows(report):
                    w.writerow([_cell(v) for v in row])
        elif format in ("jsonl", "json-lines"):
            lines = [
                {"kind": "header", "secure": report.secure, "insecure": report.insecure,
                 "cumulative_cu": report.cumulative_cu, "cumulative_raw": report.cumulative_raw},
                {"kind": "normalization", "scheme": report.normalization.scheme,
                 "bounds": {k: list(v) for k, v in report.normalization.per_metric_bounds.items()},
                 "weights": dict(report.normalization.weights)},
                {"kind": "manifest", "manifest": report.manifest},
                *(_run_to_json(r) for r in report.runs),
                *({"kind": "pair", "run": p.run, "x_SC_cu": p.x_SC_cu, "x_SC_raw": p.x_SC_raw,
                   "per_metric": dict(p.per_metric)} for p in report.pairs),
                {"kind": "summary", "summary": report.summary()},
            ]
            with open(path, "w", encoding="utf-8") as fh:
                for line in lines:
                    fh.write(json.dumps(line, sort_keys=False) + "\n")
        else:
            raise ValueError(f"unknown report format {format!r} (csv or jsonl)")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report to {path}: {exc.strerror}") from exc
    return path


def import_report(path: str | Path) -> ExperimentReport:
    """Read back a JSON-lines report written by :func:`export_report`."""
    header = norm = None
    manifest, runs, pairs = {}, [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            kind = d.pop("kind")
            if kind == "header":
                header = d
            elif kind == "normalization":
                norm = NormalizationSpec({k: tuple(v) for k, v in d["bounds"].items()}, d["weights"], d["scheme"])
            elif kind == "manifest":
                manifest = d["manifest"]
            elif kind == "run":
                runs.append(RunResult(**d))
            elif kind == "pair":
                pairs.append(PairedCost(**d))
    if header is None or norm is None:
        raise ValueError(f"{path}: not a JSON-lines report")
    return ExperimentReport(header["secure"], header["insecure"], runs, pairs,
                            header["cumulative_cu"], header["cumulative_raw"], norm, manifest)
