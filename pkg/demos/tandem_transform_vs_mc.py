"""
Joint workload / busy-age transform of a stable tandem
======================================================

Closed-form E exp(-<omega, W> - <beta, B>) against a Monte Carlo estimate
built from the supremum of the free process.
"""
import itertools

import numpy as np

from levyfluid import ExponentialJumps, single_cp_tandem, tandem_WB
from levyfluid import montecarlo as mc

spec = single_cp_tandem([1.0, 0.6], 1.0, ExponentialJumps(2.0), drift=0.05)
samples = mc.estimate_stationary(spec, 20_000, seed=7)
print(f"{samples.n_paths} stationary draws, censored fraction {samples.censored_fraction:.1e}")

# %%
verdicts = []
for om in itertools.product((0.0, 0.5, 1.0), repeat=2):
    if not any(om):
        continue
    a = tandem_WB(spec, np.array(om), np.zeros(2))
    est = mc.estimate_transform(samples, {"W": om})
    verdicts.append(mc.compare(a, est, f"omega={om}"))
for v in verdicts:
    print("  ".join(v.row()))
print("all pass:", mc.all_pass(verdicts))

# %%
# Marginal of the downstream buffer: it is empty far less often than upstream.
print("P(W_1 = 0) ~", np.mean(samples.W[:, 0] == 0))
print("P(W_2 = 0) ~", np.mean(samples.W[:, 1] == 0))
