"""A zero-range process equilibrates to the conditioned law, then condenses.

First a tiny system whose stationary law can be enumerated. Then a larger
one started flat, timing how long until one site holds a given share of
the excess.
"""

from condensate_ldp import ZrpConfig, condensation_time, stationary_check
from condensate_ldp.zrp import detailed_balance_residual

c = ZrpConfig(3, 6, 0.5, seed=1)
for jumps in (10**4, 10**5, 10**6):
    print(f"n=3 N=6, {jumps:>7d} jumps: TV = {stationary_check(c, jumps).tv:.4f}")
print(f"detailed balance residual: {detailed_balance_residual(c, 100):.1e}\n")

big = ZrpConfig(20, 200, 0.5, seed=4)
print("n=20 N=200, time until one site holds a theta share of the excess")
for theta in (0.3, 0.6, 0.9):
    h = condensation_time(big, theta, 12, 2e4)
    print(f"theta={theta}: median hitting time {h.median:9.1f}, censored {h.censored_fraction:.0%}")
