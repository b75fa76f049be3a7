"""
Two-class preemptive priority as a tree network
===============================================

Class 1 has absolute priority on a unit-rate server.  Rewriting the system
as a tandem with routing 1 turns the class workloads into buffer contents.
"""
import itertools

from levyfluid import ExponentialJumps, LevyComponentSpec, priority_WE, priority_network
from levyfluid import montecarlo as mc

cp = LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0))
spec = priority_network(1.0, [cp, cp])
s = mc.estimate_stationary(spec, 20_000, seed=3)

for om, be in itertools.product(itertools.product((0.5, 1.0), repeat=2), ((0.0, 0.0), (0.5, 0.5))):
    a = priority_WE(spec, om, be)
    v = mc.compare(a, mc.estimate_transform(s, {"W": om, "E": be}), f"omega={om} beta={be}")
    print("  ".join(v.row()))
