"""
Where the two-station tandem stops being stable
===============================================

A root input CP(1, Exp(2)) with extra drift d feeds station 1 (rate 1),
which drains fully into station 2 (rate 0.6).  The mean net input at
station 2 is d + 0.5 - 0.6, so d = 0.1 sits exactly on the boundary.
"""
import numpy as np

from levyfluid import ExponentialJumps, exponents, single_cp_tandem, validate_network

for d in (0.0, 0.05, 0.09, 0.1, 0.12):
    spec = single_cp_tandem([1.0, 0.6], 1.0, ExponentialJumps(2.0), drift=d)
    rep = validate_network(spec)
    means = [e.mean for e in exponents(spec)]
    print(f"d={d:<5} E X(1)={np.round(means, 4)}  accepted={rep.accepted}  violated={rep.violated}")

# %%
# Below the boundary the free process drifts down and its supremum is finite;
# the adjustment coefficient R controls the tail P(sup X_2 > x) ~ exp(-R x).
for d in (0.0, 0.05, 0.09):
    spec = single_cp_tandem([1.0, 0.6], 1.0, ExponentialJumps(2.0), drift=d)
    R = exponents(spec)[1].adjustment_coefficient()
    print(f"d={d:<5} R_2={R:.4f}  mean tail scale 1/R={1 / R:.1f}")
