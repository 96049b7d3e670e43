"""Exact finite-n slopes against their large-deviation limits.

The law of S_n is computed by log-domain convolution, so these are exact
numbers up to floating point. Convergence is slow: corrections decay like
a power of n with a small exponent.
"""

from condensate_ldp import derive_params, ldp_slope_max, ldp_slope_sum
from condensate_ldp.ratefn import critical_points, thresholds

p = derive_params(0.5)
th = thresholds(p)
ns = [64, 128, 256, 512]

for label, s in (("0.5*s1", 0.5 * th.s1), ("2*s1", 2 * th.s1)):
    r = ldp_slope_sum(p, s, ns)
    print(f"P(S_n = N), s={label}: limit {r.limit_prediction:.4f}")
    for n, sl, _, _ in r.rows():
        print(f"  n={n:4d}  slope={sl:.4f}")

s = 2 * th.s1
y2 = critical_points(p, s)[1]
r = ldp_slope_max(p, s, (0.9 * y2, 1.1 * y2), ns)
print(f"\nmax in [0.9, 1.1] * y2 given the sum, s=2*s1: limit {r.limit_prediction:.4f}")
for n, sl, _, _ in r.rows():
    print(f"  n={n:4d}  slope={sl:.4f}")
