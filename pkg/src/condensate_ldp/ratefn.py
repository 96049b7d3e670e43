"""Single-jump energy landscape, thresholds and the rate function of the maximum.

``g_s(y) = y**alpha + (s - y)**2 / (2 sigma2)`` is the cost of one jump of
rescaled size ``y`` plus a Gaussian remainder. The rate function ``f_s`` of
the rescaled maximum solves

    f_s(y) = y**alpha + min_{z in [0, y]} f_{s-y}(z),

and is computed here by value iteration on a lattice (:func:`f_table`) and,
independently, by a vertex enumeration (:func:`f_value`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize

from .exceptions import ConfigurationError, DomainError, InvariantViolation, ResourceError
from .model import ModelParams

__all__ = [
    "Thresholds",
    "Landscape",
    "InfF",
    "RateTable",
    "g",
    "g_prime",
    "g_second",
    "thresholds",
    "critical_points",
    "y0",
    "landscape",
    "s2_predicate",
    "s2",
    "F_finite",
    "inf_F",
    "f_value",
    "f_two_component",
    "f_table",
    "gap_set",
    "rate_max",
]

ROOT_RTOL = 1e-13
MAX_TABLE_CELLS = 4e6


class Thresholds(NamedTuple):
    s0: float
    s1: float
    y_star: float


class InfF(NamedTuple):
    """Minimum of ``g_s`` over ``[0, s]``.

    ``tie`` is set when both local minima agree to 1e-12 relative; the
    argmin then reports the condensed (larger) location.
    """

    value: float
    argmin: float
    tie: bool


@dataclass(frozen=True)
class Landscape:
    s: float
    y_star: float
    s0: float
    s1: float
    y1: Optional[float]
    y2: Optional[float]
    y0: Optional[float]
    global_min_location: float
    global_min_value: float


def _check_y(y):
    if np.any(np.asarray(y) < 0):
        raise DomainError("g_s is defined for y >= 0")


def g(params: ModelParams, s, y):
    _check_y(y)
    y = np.asarray(y, dtype=float)
    out = y**params.alpha + (s - y) ** 2 / (2.0 * params.sigma2)
    return float(out) if out.ndim == 0 else out


def g_prime(params: ModelParams, s, y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("g'_s diverges at y = 0; need y > 0")
    a = params.alpha
    out = a * y ** (a - 1.0) - (s - y) / params.sigma2
    return float(out) if out.ndim == 0 else out


def g_second(params: ModelParams, s, y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("g''_s diverges at y = 0; need y > 0")
    a = params.alpha
    out = -a * (1.0 - a) * y ** (a - 2.0) + 1.0 / params.sigma2 + 0.0 * s
    return float(out) if out.ndim == 0 else out


# scalar fast paths for the root finders
def _g(a, s2, s, y):
    return y**a + (s - y) ** 2 / (2.0 * s2)


def _gp(a, s2, s, y):
    return a * y ** (a - 1.0) - (s - y) / s2


def thresholds(params: ModelParams) -> Thresholds:
    a, s2, gam = params.alpha, params.sigma2, params.gamma
    s0 = (a * s2) ** gam * (1.0 - a) ** (gam - 1.0) / gam
    s1 = s2**gam * (2.0 - 2.0 * a) ** (gam - 1.0) / gam
    y_star = ((1.0 - a) * a * s2) ** gam
    return Thresholds(s0, s1, y_star)


def _root(f, lo, hi):
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=500)


def critical_points(params: ModelParams, s: float) -> Optional[tuple[float, float]]:
    """Zeros ``y1 < y_star < y2`` of ``g'_s``, or None when ``g_s`` is increasing.

    At ``s == s0`` (to 1e-12 relative) the double root ``(y_star, y_star)``
    is returned.
    """
    s0, _, ys = thresholds(params)
    if abs(s - s0) <= 1e-12 * s0:
        return ys, ys
    if s < s0:
        return None
    a, s2 = params.alpha, params.sigma2
    f = lambda y: _gp(a, s2, s, y)  # noqa: E731
    if f(ys) >= 0.0:
        # rounding right above s0
        return ys, ys
    lo = ys * 1e-3
    while f(lo) <= 0.0:
        lo *= 1e-3
    y1 = _root(f, lo, ys)
    y2 = _root(f, ys, s)
    return y1, y2


def y0(params: ModelParams, s: float) -> Optional[float]:
    """Smallest ``y > 0`` with ``g_s(y) == g_s(0)``; None below ``s1``."""
    _, s1, _ = thresholds(params)
    if s < s1:
        return None
    y1, y2 = critical_points(params, s)
    a, s2 = params.alpha, params.sigma2
    # g_s(y) - g_s(0) = y^a + (y^2 - 2 s y) / (2 sigma2)
    h = lambda y: y**a + (y * y - 2.0 * s * y) / (2.0 * s2)  # noqa: E731
    if h(y2) >= 0.0:
        return y2
    return _root(h, y1, y2)


def inf_F(params: ModelParams, s: float) -> InfF:
    """``min_{x in [0, s]} g_s(x)``, equal to the infimum of F_s over sequences."""
    if s < 0:
        raise DomainError("inf_F needs s >= 0")
    base = s * s / (2.0 * params.sigma2)
    cp = critical_points(params, s)
    if cp is None:
        return InfF(base, 0.0, False)
    y2 = cp[1]
    cond = _g(params.alpha, params.sigma2, s, y2)
    if abs(cond - base) <= 1e-12 * max(1.0, base):
        return InfF(min(cond, base), y2, True)
    if cond < base:
        return InfF(cond, y2, False)
    return InfF(base, 0.0, False)


def landscape(params: ModelParams, s: float) -> Landscape:
    s0, s1, ys = thresholds(params)
    cp = critical_points(params, s)
    best = inf_F(params, max(s, 0.0))
    return Landscape(
        s=s,
        y_star=ys,
        s0=s0,
        s1=s1,
        y1=None if cp is None else cp[0],
        y2=None if cp is None else cp[1],
        y0=y0(params, s),
        global_min_location=best.argmin,
        global_min_value=best.value,
    )


def _gap_margin(params: ModelParams, s: float, y: float) -> float:
    """``y - y0(s - y)``; positive iff a second component beats ``z = 0``."""
    t = s - y
    yy = y0(params, t)
    if yy is None:
        return -math.inf
    return y - yy


def _max_gap_margin(params: ModelParams, s: float, n_grid: int = 64):
    _, s1, _ = thresholds(params)
    width = s - s1
    if width <= 0:
        return -math.inf, None
    ys = width * (np.arange(1, n_grid + 1) / (n_grid + 1))
    # t = s - y stays strictly above s1 on the open interval
    vals = np.array([_gap_margin(params, s, y) for y in ys])
    i = int(np.argmax(vals))
    lo = ys[i - 1] if i > 0 else 0.5 * ys[0]
    hi = ys[i + 1] if i + 1 < n_grid else 0.5 * (ys[-1] + width)
    res = optimize.minimize_scalar(
        lambda y: -_gap_margin(params, s, y),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, s)},
    )
    if -res.fun >= vals[i]:
        return -res.fun, res.x
    return vals[i], ys[i]


def s2_predicate(params: ModelParams, s: float) -> bool:
    """True iff some ``y in (0, s - s1)`` has ``y0(s - y) < y``."""
    return _max_gap_margin(params, s)[0] > 0.0


@lru_cache(maxsize=32)
def s2(params: ModelParams, tol: float = 1e-8) -> float:
    """Threshold above which ``f_s`` departs from ``g_s``, by bisection."""
    _, s1, _ = thresholds(params)
    lo, hi = s1, 2.0 * s1
    for _ in range(200):
        if s2_predicate(params, hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InvariantViolation("s2 bracket failed: predicate false at very large s")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if s2_predicate(params, mid):
            hi = mid
        else:
            lo = mid
    out = 0.5 * (lo + hi)
    if not (s1 < out < math.inf):
        raise InvariantViolation(f"s2={out} not in (s1, inf)")
    return out


def F_finite(params: ModelParams, s: float, x) -> float:
    """Energy of a finite nonincreasing sequence (zeros implied after it)."""
    x = np.asarray(x, dtype=float)
    if x.size and (np.any(x < 0) or np.any(np.diff(x) > 0)):
        raise DomainError("x must be nonnegative and nonincreasing")
    return float(np.sum(x**params.alpha) + (s - x.sum()) ** 2 / (2.0 * params.sigma2))


def _min_g_on(params: ModelParams, t: float, y: float) -> float:
    """``min_{r in [0, y]} g_t(r)``: endpoints plus the local minimiser y2(t)."""
    a, s2 = params.alpha, params.sigma2
    best = min(_g(a, s2, t, 0.0), _g(a, s2, t, y))
    cp = critical_points(params, t)
    if cp is not None and cp[1] < y:
        best = min(best, _g(a, s2, t, cp[1]))
    return best


def f_two_component(params: ModelParams, s: float, y: float) -> float:
    """``y**alpha + min_{z in [0, y]} g_{s-y}(z)``: sequences with two nonzero entries."""
    _check_y(y)
    if y == 0:
        return s * s / (2.0 * params.sigma2)
    return y**params.alpha + _min_g_on(params, s - y, y)


def f_value(params: ModelParams, s: float, y: float) -> float:
    """``f_s(y)`` by vertex enumeration.

    With the first entry fixed at ``y`` the remaining entries lie in
    ``[0, y]``; for a fixed total the concave cost ``sum x_j**alpha`` is
    minimised at a vertex, i.e. ``m`` copies of ``y`` plus one remainder.
    Hence ``f_s(y) = min_m (m+1) y**alpha + min_{r in [0,y]} g_{s-(m+1)y}(r)``.
    """
    _check_y(y)
    if y == 0:
        return s * s / (2.0 * params.sigma2)
    ya = y**params.alpha
    if y < thresholds(params).y_star:
        # y2(t) > y_star > y, so only r in {0, y} compete and the cost
        # k y^a + (s - k y)^2 / (2 sigma2) is convex in the copy count k >= 1
        s2_ = params.sigma2
        k_star = (s - s2_ * ya / y) / y
        ks = {1, math.floor(k_star), math.ceil(k_star)} if k_star > 1 else {1}
        return min(k * ya + (s - k * y) ** 2 / (2.0 * s2_) for k in ks)
    best = math.inf
    m = 0
    while True:
        fixed = (m + 1) * ya
        if fixed >= best:
            break
        t = s - (m + 1) * y
        best = min(best, fixed + _min_g_on(params, t, y))
        if t <= 0:
            break
        m += 1
    return best


@dataclass(frozen=True)
class RateTable:
    """``f_s(y)`` on a lattice; rows follow ``s_grid``, columns ``y_grid``."""

    params: ModelParams
    s_grid: np.ndarray
    y_grid: np.ndarray
    values: np.ndarray
    iterations: int
    sup_change_last_iter: float
    grid_step: float

    def g_values(self) -> np.ndarray:
        return g(self.params, self.s_grid[:, None], self.y_grid[None, :])

    def row(self, s: float) -> np.ndarray:
        """``f_s`` on ``y_grid``, linearly interpolated between s-rows."""
        sg = self.s_grid
        if not (sg[0] - 1e-12 <= s <= sg[-1] + 1e-12):
            raise DomainError(f"s={s} outside table range [{sg[0]}, {sg[-1]}]")
        i = int(np.clip(np.searchsorted(sg, s) - 1, 0, len(sg) - 2))
        w = (s - sg[i]) / (sg[i + 1] - sg[i])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def at(self, s: float, y: float) -> float:
        return float(np.interp(y, self.y_grid, self.row(s)))


def default_grid_step(params: ModelParams, s_max: float, y_max: float) -> float:
    """``min(s1, 1)/400``, coarsened until the table fits the cell budget."""
    _, s1, _ = thresholds(params)
    h = min(s1, 1.0) / 400.0
    h_budget = math.sqrt(s_max * y_max / MAX_TABLE_CELLS)
    return max(h, h_budget)


def f_table(
    params: ModelParams,
    s_max: float,
    y_max: Optional[float] = None,
    grid_step: Optional[float] = None,
    tol: float = 1e-9,
    max_iter: int = 500,
) -> RateTable:
    """Value iteration for ``f`` on the lattice ``s_max - i*h`` by ``j*h``.

    The s-lattice is anchored at ``s_max`` so every residual ``s - y`` is again
    a lattice node; residuals at or below zero are closed form (``g``), since
    extra components only add cost there. Iterate ``k`` is the infimum of F
    over lattice sequences with at most ``k + 1`` nonzero entries.
    """
    y_max = s_max if y_max is None else y_max
    if s_max <= 0:
        raise ConfigurationError("s_max must be positive")
    if y_max < s_max:
        raise ConfigurationError("y_max must be >= s_max")
    h = default_grid_step(params, s_max, y_max) if grid_step is None else float(grid_step)
    if h <= 0:
        raise ConfigurationError("grid_step must be positive")
    y_star = thresholds(params).y_star
    if h > 0.5 * y_star:
        raise ConfigurationError(
            f"grid_step={h} too coarse to resolve y_star={y_star:.4g}; need <= y_star/2"
        )
    n_rows = int(math.floor(s_max / h + 1e-9)) + 1
    n_cols = int(math.ceil(y_max / h - 1e-9)) + 1
    if n_rows * n_cols > 4 * MAX_TABLE_CELLS:
        raise ResourceError(
            f"table of {n_rows}x{n_cols} cells exceeds budget; increase grid_step"
        )
    inv = 1.0 / (2.0 * params.sigma2)
    t = s_max - np.arange(n_rows) * h  # descending, t[-1] in [0, h)
    y = np.arange(n_cols) * h
    ya = y**params.alpha
    T = ya[None, :] + (t[:, None] - y[None, :]) ** 2 * inv

    # Residual rows below zero: min over z of g_{t'}(z) is g_{t'}(0), the same
    # for every column. Row k of `pad` holds residual s_max - k*h.
    k_out = np.arange(n_rows, n_rows + n_cols)
    pad = np.empty((n_rows + n_cols, n_cols))
    pad[n_rows:] = ((s_max - k_out * h) ** 2 * inv)[:, None]
    rs, cs = pad.strides
    # skew[i, j] is pad[i + j, j]: the row of residual t_i - y_j
    skew = np.lib.stride_tricks.as_strided(
        pad, shape=(n_rows, n_cols), strides=(rs, rs + cs), writeable=False
    )

    change = math.inf
    it = 0
    while it < max_iter:
        np.minimum.accumulate(T, axis=1, out=pad[:n_rows])
        new = np.minimum(T, ya[None, :] + skew)
        change = float(np.max(T - new))
        T = new
        it += 1
        if change < tol:
            break
    return RateTable(
        params=params,
        s_grid=t[::-1].copy(),
        y_grid=y,
        values=T[::-1].copy(),
        iterations=it,
        sup_change_last_iter=change,
        grid_step=h,
    )


def gap_set(params: ModelParams, s: float, n_grid: int = 400) -> list[tuple[float, float]]:
    """Intervals of ``{y in (0, s - s1): y0(s - y) < y}``, where f_s < g_s."""
    _, s1, _ = thresholds(params)
    width = s - s1
    if width <= 0:
        return []
    ys = width * (np.arange(1, n_grid + 1) / (n_grid + 1))
    m = np.array([_gap_margin(params, s, y) for y in ys])
    pos = m > 0
    out = []
    i = 0
    margin = lambda y: _gap_margin(params, s, y)  # noqa: E731
    while i < n_grid:
        if not pos[i]:
            i += 1
            continue
        j = i
        while j + 1 < n_grid and pos[j + 1]:
            j += 1
        lo = _root(margin, ys[i - 1], ys[i]) if i > 0 else 0.0
        hi = _root(margin, ys[j], ys[j + 1]) if j + 1 < n_grid else width
        out.append((lo, hi))
        i = j + 1
    if not out:
        # a narrow gap can fall between grid nodes; refine around the peak
        peak, where = _max_gap_margin(params, s)
        if peak > 0:
            lo = _root(margin, _left_neg(margin, where, 0.0), where)
            hi = _root(margin, where, _right_neg(margin, where, width))
            out.append((lo, hi))
    return out


def _left_neg(f, x, floor):
    step = 1e-3 * max(x, 1e-12)
    while f(x - step) > 0 and x - step > floor:
        step *= 2
    return max(x - step, floor + 1e-15)


def _right_neg(f, x, ceil):
    step = 1e-3 * max(x, 1e-12)
    while f(x + step) > 0 and x + step < ceil:
        step *= 2
    return min(x + step, ceil - 1e-15)


def rate_max(params: ModelParams, s: float, y: float, table: Optional[RateTable] = None) -> float:
    """Rate ``f_s(y) - inf f_s`` of the rescaled maximum.

    ``f_s`` comes from ``table`` when given, else from :func:`f_value`.
    """
    _check_y(y)
    fy = table.at(s, y) if table is not None else f_value(params, s, y)
    return max(fy - inf_F(params, s).value, 0.0)
