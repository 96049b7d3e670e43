"""Exact finite-n laws by log-domain convolution.

Distributions of ``S_n``, of ``(M_n | S_n = N)`` and of the top two order
statistics, together with the empirical slopes ``-(1/n**(gamma*alpha)) log P``
that are compared against the rate functions of :mod:`condensate_ldp.ratefn`.
All probabilities are carried as natural logs; events of interest reach
``exp(-60)`` and below.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import ratefn
from .exceptions import DomainError, ResourceError
from .model import ModelParams, gaussian_exponent, validate_kappa

__all__ = [
    "LogPmf",
    "SlopeReport",
    "single_law",
    "convolve",
    "sum_law",
    "lattice_target",
    "log_sum_prob",
    "conditioned_max_cdf",
    "log_top_two_joint",
    "top_two_joint",
    "max_law_decomposition",
    "ldp_slope_sum",
    "ldp_slope_max",
    "normal_residual",
    "brute_force_law",
    "MAX_N",
    "MAX_SUPPORT",
]

MAX_N = 4096
MAX_SUPPORT = 60_000


@dataclass(frozen=True)
class LogPmf:
    """Log-weights on the contiguous support ``offset .. offset + len - 1``.

    ``total_mass`` is None for a normalised law, else the (sub-unit) mass of
    the event the weights describe, e.g. ``{X <= cap}``.
    """

    offset: int
    logp: np.ndarray = field(repr=False)
    total_mass: Optional[float] = None

    @property
    def top(self) -> int:
        return self.offset + len(self.logp) - 1

    def log_at(self, k: int) -> float:
        if k < self.offset or k > self.top:
            return -math.inf
        return float(self.logp[k - self.offset])

    def prob(self, k: int) -> float:
        return math.exp(self.log_at(k))

    def log_mass(self) -> float:
        return _lse(self.logp)


def _lse(v: np.ndarray) -> float:
    m = float(np.max(v)) if len(v) else -math.inf
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.exp(v - m).sum()))


def single_law(params: ModelParams, K: int, cap: Optional[int] = None) -> LogPmf:
    """Law of X restricted to ``[0, min(K, cap)]`` (sub-normalised)."""
    if K < 1:
        raise DomainError("K must be >= 1")
    if cap is not None and cap < 0:
        raise DomainError("cap must be >= 0")
    top = K if cap is None else min(K, cap)
    k = np.arange(top + 1, dtype=float)
    logp = math.log(params.c) - k**params.alpha
    return LogPmf(0, logp, math.exp(_lse(logp)))


def _order_key(p: LogPmf):
    return (p.offset, len(p.logp), p.logp.tobytes())


def convolve(p: LogPmf, q: LogPmf, N_max: int) -> LogPmf:
    """Exact convolution truncated to support ``<= N_max``; O(N_max**2)."""
    if N_max < 0:
        raise DomainError("N_max must be >= 0")
    # canonical operand order makes the result independent of argument order
    if _order_key(q) < _order_key(p):
        p, q = q, p
    lo = p.offset + q.offset
    hi = min(p.top + q.top, N_max)
    if hi < lo:
        return LogPmf(lo, np.empty(0), 0.0)
    a, b = p.logp, q.logp
    La, Lb = len(a), len(b)
    brev = b[::-1].copy()
    L = hi - lo + 1
    out = np.full(L, -math.inf)
    exp, log = np.exp, math.log
    for r in range(L):
        i0 = r - Lb + 1 if r >= Lb else 0
        i1 = r if r < La else La - 1
        if i0 > i1:
            continue
        v = a[i0 : i1 + 1] + brev[Lb - 1 - r + i0 : Lb - r + i1]
        m = v.max()
        if m == -math.inf:
            continue
        out[r] = m + log(exp(v - m).sum())
    return LogPmf(lo, out, None)


def _default_N_max(params: ModelParams, n: int, s: float = 0.0) -> int:
    return math.ceil(
        params.mu * n + 6.0 * math.sqrt(params.sigma2 * n) + 3.0 * abs(s) * n**params.gamma
    )


@lru_cache(maxsize=256)
def _sum_law_cached(params: ModelParams, n: int, N_max: int, cap: Optional[int]) -> LogPmf:
    base = single_law(params, max(N_max, 1), cap)
    result = None
    power = base
    while True:
        if n & 1:
            result = power if result is None else convolve(result, power, N_max)
        n >>= 1
        if not n:
            break
        power = convolve(power, power, N_max)
    return result


def sum_law(
    params: ModelParams, n: int, N_max: Optional[int] = None, cap: Optional[int] = None
) -> LogPmf:
    """Law of ``S_n`` on ``[0, N_max]`` jointly with ``{all X_i <= cap}``.

    Entries are exact up to ``N_max`` because the summands are nonnegative.
    Built by binary doubling of :func:`convolve`.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if N_max is None:
        N_max = _default_N_max(params, n)
    if n > MAX_N or N_max > MAX_SUPPORT:
        raise ResourceError(
            f"n={n}, N_max={N_max} exceeds the budget (n <= {MAX_N}, "
            f"N_max <= {MAX_SUPPORT}); reduce n or s"
        )
    return _sum_law_cached(params, int(n), int(N_max), None if cap is None else int(cap))


def lattice_target(params: ModelParams, s: float, n: int, mode: str = "floor") -> tuple[int, float]:
    """Integer target ``N`` near ``mu n + s n**gamma`` and its exact ``s_n``."""
    x = params.mu * n + s * n**params.gamma
    N = math.floor(x) if mode == "floor" else int(round(x))
    N = max(N, 0)
    return N, (N - params.mu * n) / n**params.gamma


def log_sum_prob(params: ModelParams, n: int, N: int, cap: Optional[int] = None) -> float:
    """``log P(S_n = N, max X_i <= cap)``."""
    if N < 0:
        return -math.inf
    return sum_law(params, n, N, cap).log_at(N)


def conditioned_max_cdf(params: ModelParams, n: int, N: int, m_grid: Sequence[int]) -> np.ndarray:
    """``P(M_n <= m | S_n = N)`` for each ``m`` in ``m_grid``."""
    den = log_sum_prob(params, n, N)
    out = np.empty(len(m_grid))
    for i, m in enumerate(m_grid):
        if m >= N:
            out[i] = 1.0
        elif m < 0:
            out[i] = 0.0
        else:
            out[i] = math.exp(log_sum_prob(params, n, N, int(m)) - den)
    return out


def log_top_two_joint(
    params: ModelParams, n: int, N: int, a: int, b: int, conditional: bool = False
) -> float:
    """``log P(X_[1] = a, X_[2] <= b, S_n = N)`` for ``b < a``.

    With ``b < a`` exactly one coordinate equals ``a``, so the probability is
    ``n * pmf(a) * P(S_{n-1} = N - a, M_{n-1} <= b)``.
    """
    if n < 2:
        raise DomainError("top-two law needs n >= 2")
    if not (0 <= b < a):
        raise DomainError("need 0 <= b < a; ties come from max-CDF differences")
    if a > N:
        return -math.inf
    out = (
        math.log(n)
        + math.log(params.c)
        - a**params.alpha
        + log_sum_prob(params, n - 1, N - a, b)
    )
    if conditional:
        out -= log_sum_prob(params, n, N)
    return out


def top_two_joint(
    params: ModelParams, n: int, N: int, a: int, b: int, conditional: bool = False
) -> float:
    return math.exp(log_top_two_joint(params, n, N, a, b, conditional))


def max_law_decomposition(params: ModelParams, n: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``P(M_n = a | S_n = N)`` into a unique top value and a tie.

    Returns ``(single, tie)`` indexed by ``a = 0..N``: ``single[a]`` is
    ``P(X_[1] = a > X_[2] | S_n = N)`` and ``tie[a]`` is
    ``P(X_[1] = X_[2] = a | S_n = N)``, the latter obtained as the max-CDF
    difference minus ``single[a]``.
    """
    cdf = conditioned_max_cdf(params, n, N, list(range(-1, N + 1)))
    pmf_max = np.diff(cdf)
    single = np.zeros(N + 1)
    for a in range(1, N + 1):
        single[a] = top_two_joint(params, n, N, a, a - 1, conditional=True)
    tie = pmf_max - single
    return single, tie


@dataclass(frozen=True)
class SlopeReport:
    alpha: float
    s: float
    n_values: np.ndarray
    slopes: np.ndarray
    limit_prediction: float
    residual_ratios: np.ndarray
    targets: np.ndarray
    log_probs: np.ndarray

    def rows(self):
        for n, sl, rr in zip(self.n_values, self.slopes, self.residual_ratios):
            yield int(n), float(sl), self.limit_prediction, float(rr)


def _check_n_list(n_list):
    n_values = np.asarray(sorted(set(int(n) for n in n_list)))
    if np.any(n_values < 1) or np.any(n_values & (n_values - 1)):
        raise DomainError("n values must be powers of two")
    return n_values


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def ldp_slope_sum(params: ModelParams, s: float, n_list, threads: int = 1) -> SlopeReport:
    """Slopes ``-(1/n^(gamma alpha)) log P(S_n = floor(mu n + s n^gamma))``."""
    n_values = _check_n_list(n_list)
    speed = params.gamma * params.alpha
    targets = [lattice_target(params, s, int(n))[0] for n in n_values]
    logs = np.array(
        _map(lambda nN: log_sum_prob(params, nN[0], nN[1]), list(zip(n_values.tolist(), targets)), threads)
    )
    slopes = -logs / n_values**speed
    pred = ratefn.inf_F(params, s).value
    resid = np.abs(slopes - pred) / n_values ** (params.gamma - 1.0)
    return SlopeReport(params.alpha, s, n_values, slopes, pred, resid, np.array(targets), logs)


def _log_diff(a: float, b: float) -> float:
    """``log(exp(a) - exp(b))`` for ``a >= b``."""
    if b == -math.inf:
        return a
    if b >= a:
        return -math.inf
    return a + math.log1p(-math.exp(b - a))


def window_rate(params: ModelParams, s: float, window: tuple[float, float], n_grid: int = 401) -> float:
    """``inf`` of the max-rate over the window, on a uniform grid."""
    lo, hi = window
    ys = np.linspace(lo, hi, n_grid)
    return min(ratefn.rate_max(params, s, float(y)) for y in ys)


def ldp_slope_max(
    params: ModelParams, s: float, y_window: tuple[float, float], n_list, threads: int = 1
) -> SlopeReport:
    """Slopes of ``-log P(M_n / n^gamma in window | S_n = N) / n^(gamma alpha)``."""
    lo, hi = y_window
    if not (0 <= lo < hi):
        raise DomainError("window must be a positive-length interval in [0, inf)")
    n_values = _check_n_list(n_list)
    speed = params.gamma * params.alpha

    def one(n):
        N, _ = lattice_target(params, s, n)
        scale = n**params.gamma
        m_hi = min(math.floor(hi * scale), N)
        m_lo = math.ceil(lo * scale) - 1
        if m_hi <= m_lo:
            return N, -math.inf
        upper = log_sum_prob(params, n, N, m_hi) if m_hi < N else log_sum_prob(params, n, N)
        lower = log_sum_prob(params, n, N, m_lo) if m_lo >= 0 else -math.inf
        return N, _log_diff(upper, lower) - log_sum_prob(params, n, N)

    res = _map(one, n_values.tolist(), threads)
    targets = np.array([r[0] for r in res])
    logs = np.array([r[1] for r in res])
    slopes = -logs / n_values**speed
    pred = window_rate(params, s, (lo, hi))
    resid = np.abs(slopes - pred) / n_values ** (params.gamma - 1.0)
    return SlopeReport(params.alpha, s, n_values, slopes, pred, resid, targets, logs)


def normal_residual(params: ModelParams, s: float, kappa: float, n_list) -> np.ndarray:
    """``|log P(M_n <= kappa n^g, S_n = N_n) + gaussian term| / n^(3g - 2)`` per n.

    ``N_n`` is the integer nearest ``mu n + s n^gamma``; the Gaussian term
    uses the matching ``s_n``. An empty event gives ``inf``.
    """
    validate_kappa(params, s, kappa)
    out = []
    for n in n_list:
        n = int(n)
        N, s_n = lattice_target(params, s, n, mode="round")
        cap = math.floor(kappa * n**params.gamma)
        lp = log_sum_prob(params, n, N, cap)
        val = abs(lp + gaussian_exponent(params, s_n, n))
        out.append(val / n ** (3.0 * params.gamma - 2.0))
    return np.array(out)


def brute_force_law(params: ModelParams, n: int, N_max: int):
    """Enumerate all n-tuples with entries ``<= N_max``; test oracle only.

    Returns ``{tuple: probability}`` restricted to tuples with sum ``<= N_max``.
    """
    if n > 4 or N_max > 16:
        raise ResourceError("brute force is limited to n <= 4, N_max <= 16")
    w = [params.c * math.exp(-(k**params.alpha)) for k in range(N_max + 1)]
    out = {}
    for tup in itertools.product(range(N_max + 1), repeat=n):
        if sum(tup) <= N_max:
            out[tup] = math.prod(w[k] for k in tup)
    return out
