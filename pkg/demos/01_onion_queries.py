"""Slicing a cost store: totals, breakdowns and a time series.

Builds a small synthetic store by hand so every number below can be checked
by hand, then asks it the usual questions.
"""

from seccost import Category, ComponentId, CostQuery, CostSample, SampleStore, TaskKind
from seccost import cost_breakdown, time_series, total_cost

framework = ComponentId("IoT-Framework", ("127.0.0.1", 5003))
sensor = ComponentId("C1", ("127.0.0.1", 5001))
authorise = TaskKind("authorise", Category.SECURITY)
lookup = TaskKind("lookup", Category.USE_CASE)
measure = TaskKind("measure-temperature", Category.USE_CASE)

store = SampleStore()
# (interaction, component, task, metric, t_ms, value)
for row in [
    ("run-1", framework, authorise, "M1", 10, 0.5),
    ("run-1", framework, lookup, "M1", 12, 0.25),
    ("run-1", sensor, measure, "M1", 20, 1.0),
    ("run-1", sensor, measure, "M4", 20, 0.125),
    ("run-2", framework, authorise, "M1", 110, 0.75),
    ("run-2", sensor, measure, "M1", 130, 1.5),
]:
    store.append(CostSample(*row))

print("everything, M1 only     ", total_cost(store, CostQuery(metrics={"M1"})))  # 4.0
print("run-1, all metrics      ", total_cost(store, CostQuery(interactions={"run-1"})))  # 1.875
print("security tasks, M1      ", total_cost(store, CostQuery(category="security-related", metrics={"M1"})))  # 1.25

# A breakdown splits one total along each layer; every layer re-sums to it.
b = cost_breakdown(store, CostQuery(metrics={"M1"}))
print("total", b.total)
for (iid, comp), v in b.per_component.items():
    print(f"  {iid:6} {comp.name:14} {v}")
for (iid, comp, task), v in b.per_task.items():
    print(f"  {iid:6} {comp.name:14} {task.name:20} {task.category.value:17} {v}")

# Half-open windows of 50 ms from t=0.
for start, value in time_series(store, CostQuery(0, 150, metrics={"M1"}), 50):
    print(f"[{start:>3}, {start + 50:>3})  {value}")
