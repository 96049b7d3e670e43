"""Two big jumps beat one once s passes s2.

Solves the Bellman recursion for f_s on a grid and compares it with the
single-jump energy g_s. The gap set is where f_s sits strictly below g_s.
"""

import numpy as np

from condensate_ldp import derive_params, f_table, gap_set, s2
from condensate_ldp.ratefn import g, thresholds

p = derive_params(0.5)
th = thresholds(p)
t2 = s2(p)

for label, s in (("mid(s1,s2)", 0.5 * (th.s1 + t2)), ("1.5*s2", 1.5 * t2)):
    tab = f_table(p, s)
    row = tab.row(s)
    gv = g(p, s, tab.y_grid)
    mask = tab.y_grid <= s
    print(f"s={s:.3f} ({label}): grid_step={tab.grid_step:.4f}, sweeps={tab.iterations}")
    print(f"  max(g - f) on [0, s] = {np.max((gv - row)[mask]):.4f}")
    print(f"  gap set: {gap_set(p, s)}")

s = 1.5 * t2
tab = f_table(p, s)
row, gv = tab.row(s), g(p, s, tab.y_grid)
print("\n     y       f       g")
for y in np.linspace(0.0, 40.0, 9):
    i = int(np.argmin(np.abs(tab.y_grid - y)))
    print(f"{tab.y_grid[i]:6.2f} {row[i]:7.4f} {gv[i]:7.4f}")
