"""Command line: ``seccost run|report|graph|replay``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .graph import export_graph
from .harness import ExperimentConfig, replay, run_experiment
from .model import SampleStore
from .monitor import RecordSink
from .report import export_report, import_report
from .testbed import Stores
from .tracer import TraceStore


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    report, _ = run_experiment(config, args.out)
    print(f"{report.secure} vs {report.insecure}: {len(report.pairs)} pairs, "
          f"cumulative x_SC = {report.cumulative_cu:.6f} CU, "
          f"mean = {report.mean_x_SC_cu:.6f} CU, failures = {len(report.failures)}")
    print(f"wrote {args.out}")
    return 0 if not report.failures else 2


def _cmd_report(args) -> int:
    report = import_report(Path(args.inp) / "report.jsonl")
    out = Path(args.out) if args.out else Path(args.inp) / f"report.{args.format}"
    export_report(report, out, args.format)
    print(out)
    return 0


def _cmd_graph(args) -> int:
    d = Path(args.inp)
    stores = Stores(SampleStore(), TraceStore.load(d / "traces.tsv"), RecordSink.load(d / "records.tsv"))
    dot = export_graph(stores, args.interaction)
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return 0


def _cmd_replay(args) -> int:
    d = Path(args.inp)
    recomputed = replay(d)
    tmp = d / "report.replay.jsonl"
    export_report(recomputed, tmp, "jsonl")
    same = tmp.read_bytes() == (d / "report.jsonl").read_bytes()
    print("replay: identical" if same else f"replay: DIFFERS (see {tmp})")
    if same:
        tmp.unlink()
    return 0 if same else 1


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="seccost", description="Measure the runtime cost of security.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="execute the configured workloads and write stores + report")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    r = sub.add_parser("report", help="re-export a stored report")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--out")
    r.set_defaults(func=_cmd_report)

    r = sub.add_parser("graph", help="DOT graph of one interaction")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--interaction", required=True)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_graph)

    r = sub.add_parser("replay", help="recompute the report from stored records and compare")
    r.add_argument("--in", dest="inp", required=True)
    r.set_defaults(func=_cmd_replay)

    args = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
