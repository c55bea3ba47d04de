"""Putting seconds, percent and kilobytes on one scale.

Raw totals of different metrics cannot be added directly. Min-max bounds map
each metric to [0, 1] and the cost unit (CU) is the sum of the mapped values.
"""

from seccost import fit_minmax, to_cost_unit
from seccost.catalogue import normalize

x1 = {"M1": 5.0, "M2": 10.0, "M3": 5.0, "M4": 10.0}
x2 = {"M1": 10.0, "M2": 5.0, "M3": 10.0, "M4": 5.0}

spec = fit_minmax([x1, x2])
print(spec.to_text())
print("x1:", normalize(x1, spec), "->", to_cost_unit(x1, spec), "CU")
print("x2:", normalize(x2, spec), "->", to_cost_unit(x2, spec), "CU")

# Both vectors land on 2.0: each is best on two metrics and worst on the other two.
# A metric whose observed min equals its max carries no information and scores 0.
flat = fit_minmax([{"M1": 3.0, "M4": 1.0}, {"M1": 7.0, "M4": 1.0}])
print(normalize({"M1": 5.0, "M4": 1.0}, flat))
