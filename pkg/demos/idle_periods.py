"""
Ages of the current idle periods
================================

For a tandem with a single compound Poisson input, the idle age I_k at
station k is positive exactly when the free supremum at k vanishes.  Its
transform factorizes along the tandem.
"""
import numpy as np
from scipy import stats

from levyfluid import ExponentialJumps, idle_vector, single_cp_tandem
from levyfluid import montecarlo as mc

spec = single_cp_tandem([1.0, 0.8, 0.65], 1.0, ExponentialJumps(2.0), drift=0.05)
s = mc.estimate_stationary(spec, 20_000, seed=11)

for g in ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.5]):
    est = mc.estimate_transform(s, {"I": g})
    print(g, f"analytic {idle_vector(spec, g):.5f}", f"mc {est.mean:.5f} +- {est.se:.5f}")

# %%
# Given an empty upstream-driven buffer, the idle age is exponential with the
# input intensity: the time back to the last arrival.
for k in range(3):
    h = s.I[s.xbar[:, k] == 0, k]
    print(f"station {k + 1}: {h.size} idle draws, mean {h.mean():.3f}, "
          f"KS p vs Exp(1) {stats.kstest(h, 'expon').pvalue:.3f}")
