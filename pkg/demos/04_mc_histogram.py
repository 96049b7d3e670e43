"""Importance-sampled law of the maximum, checked against the exact law.

At n=64 and s=2*s1 most of the conditional mass already sits on maxima of
order n^gamma, around the landscape minimizer y2(s) = 45.7.
"""

import math

import numpy as np

from condensate_ldp import derive_params, mc_max_histogram
from condensate_ldp.exactlaw import conditioned_max_cdf, lattice_target
from condensate_ldp.ratefn import thresholds

p = derive_params(0.5)
n, s = 64, 2 * thresholds(p).s1
N, _ = lattice_target(p, s, n)
scale = n**p.gamma
edges = [0.0, 1, 2, 4, 8, 16, 32, 40, 44, 48, 52, N / scale + 1e-9]

h = mc_max_histogram(p, n, s, 1.0, edges, seed=3, batches=10, batch_size=20_000)
his = [-1] + [math.ceil(e * scale) - 1 for e in edges[1:-1]] + [N]
exact = np.diff(conditioned_max_cdf(p, n, N, his))

print(f"n={n}  N={N}  M_n/n^gamma bins")
print("      bin            MC        SE      exact")
for lo, hi, pr, se, ex in zip(edges[:-1], edges[1:], h.probabilities, h.standard_errors, exact):
    print(f"[{lo:5.1f},{hi:5.1f})  {pr:.3e}  {se:.1e}  {ex:.3e}")
