"""Where a single big jump starts to pay off.

For a given excess s, g_s(y) prices one jump of size y plus a Gaussian
spread of the rest. This walks s through the thresholds s0 < s1 < s2 and
shows the landscape's critical points changing.
"""

from condensate_ldp import derive_params, s2
from condensate_ldp.ratefn import inf_F, landscape, thresholds

p = derive_params(0.5)
th = thresholds(p)
print(f"alpha=0.5  mu={p.mu:.6f}  sigma2={p.sigma2:.6f}  gamma={p.gamma:.4f}")
print(f"s0={th.s0:.4f}  s1={th.s1:.4f}  s2={s2(p):.4f}  y*={th.y_star:.4f}\n")


def fmt(v):
    return "   -   " if v is None else f"{v:7.3f}"


print("     s      y1      y2      y0   argmin    inf g")
for s in (0.5 * th.s0, th.s0, 0.5 * (th.s0 + th.s1), th.s1, 1.5 * th.s1, 2 * th.s1):
    lan = landscape(p, s)
    r = inf_F(p, s)
    print(f"{s:6.2f} {fmt(lan.y1)} {fmt(lan.y2)} {fmt(lan.y0)} {r.argmin:8.3f} {r.value:8.4f}")

print("\nBelow s1 the cheapest route spreads the excess (argmin 0).")
print("Above s1 one site carries a macroscopic share y2(s).")
