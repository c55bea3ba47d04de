"""Graphviz DOT view of one interaction: who talked to whom, and who did what."""

from __future__ import annotations

from .model import Category
from .testbed import Stores

__all__ = ["export_graph"]

_MARK = {Category.SECURITY: "[S]", Category.USE_CASE: "[U]"}


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_graph(stores: Stores, interaction: str) -> str:
    """DOT digraph with one node per component and one edge per distinct
    (sender, receiver, message type).  Node labels list the component's tasks
    in first-performed order, marked ``[S]`` (security) or ``[U]`` (use case).
    """
    traces = stores.traces.for_interaction(interaction)
    records = stores.records.for_interaction(interaction)
    if not traces and not records:
        raise KeyError(f"unknown interaction {interaction!r}")

    tasks: dict[str, dict[str, Category]] = {}
    for t in traces:
        tasks.setdefault(t.component.name, {}).setdefault(t.task.name, t.task.category)
    edges = set()
    for r in records:
        src = r.sender_component or f"{r.sender[0]}:{r.sender[1]}"
        dst = r.receiver_component or f"{r.receiver[0]}:{r.receiver[1]}"
        tasks.setdefault(src, {})
        tasks.setdefault(dst, {})
        edges.add((src, dst, r.message_type))

    lines = [f"digraph {_q('interaction ' + interaction)} {{", "  rankdir=LR;", "  node [shape=box];"]
    for name in sorted(tasks):
        label = "\\n".join([name, *(f"{_MARK[cat]} {task}" for task, cat in tasks[name].items())])
        lines.append(f"  {_q(name)} [label=\"{label}\"];")
    for src, dst, mtype in sorted(edges):
        lines.append(f"  {_q(src)} -> {_q(dst)} [label={_q(mtype)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
