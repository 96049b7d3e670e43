"""Stretched-exponential law on the nonnegative integers.

``P(X = k) = c * exp(-k**alpha)`` for ``alpha`` in (0, 1). This module holds
the normalisation and moments, tail-sum bounds, the truncated cumulant
generating function and the tilt solver used by the normal approximation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
from scipy import special

from .exceptions import DomainError, NoSolutionError

__all__ = [
    "ModelParams",
    "TailBound",
    "TruncatedCgf",
    "derive_params",
    "pmf",
    "log_pmf",
    "tail_bound",
    "cgf",
    "cgf_derivs",
    "solve_tilt",
    "gaussian_exponent",
    "kappa_limit",
    "validate_kappa",
    "truncated_moment_sum",
]


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    c: float
    mu: float
    sigma2: float
    gamma: float
    series_tol: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls(**json.loads(text))


class TailBound(NamedTuple):
    """Upper bound on ``sum_{j > ell} j**k exp(-j**alpha)``.

    ``constant`` is ``bound / (ell**(k+1-alpha) * exp(-ell**alpha))``.
    """

    bound: float
    constant: float


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")


def _log_upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """log of the upper incomplete gamma function Gamma(a, x), a > 0."""
    x = np.asarray(x, dtype=float)
    q = special.gammaincc(a, x)
    with np.errstate(divide="ignore"):
        out = special.gammaln(a) + np.log(q)
    # Q underflows for large x; fall back to x^(a-1) e^-x / (1 - (a-1)/x),
    # an upper bound for x > a - 1.
    bad = ~np.isfinite(out)
    if np.any(bad):
        xb = x[bad]
        corr = np.where(a > 1.0, -np.log1p(-(a - 1.0) / xb), 0.0)
        out[bad] = (a - 1.0) * np.log(xb) - xb + corr
    return out


def _log_tail_integral(alpha: float, k_power: int, ell: np.ndarray) -> np.ndarray:
    # int_ell^inf u^k exp(-u^alpha) du = Gamma((k+1)/alpha, ell^alpha) / alpha
    a = (k_power + 1.0) / alpha
    return _log_upper_gamma(a, np.asarray(ell, dtype=float) ** alpha) - math.log(alpha)


def _monotone_from(alpha: float, k_power: int) -> float:
    # d/dx x^k e^{-x^a} <= 0  iff  x^a >= k/a
    if k_power == 0:
        return 0.0
    return (k_power / alpha) ** (1.0 / alpha)


def tail_bound(alpha: float, k_power: int, ell: int) -> TailBound:
    """Integral-comparison bound on the tail sum beyond ``ell``."""
    _check_alpha(alpha)
    if k_power < 0 or ell < 1:
        raise DomainError("need k_power >= 0 and ell >= 1")
    start = _monotone_from(alpha, k_power)
    if ell < start:
        raise DomainError(
            f"x^{k_power} exp(-x^{alpha}) is not decreasing at ell={ell}; "
            f"use ell >= {math.ceil(start)}"
        )
    log_b = float(_log_tail_integral(alpha, k_power, np.array([ell]))[0])
    log_scale = (k_power + 1.0 - alpha) * math.log(ell) - ell**alpha
    return TailBound(math.exp(log_b), math.exp(log_b - log_scale))


@lru_cache(maxsize=64)
def derive_params(alpha: float, tol: float = 1e-12) -> ModelParams:
    """Normalising constant, mean and variance of the law.

    The series are summed up to the smallest K at which the integral tail
    bound for each of the three series drops below ``tol`` times its
    partial sum.
    """
    _check_alpha(alpha)
    if not (0.0 < tol <= 1e-6):
        raise DomainError(f"tol must lie in (0, 1e-6], got {tol!r}")
    start = max(_monotone_from(alpha, 2), 1.0)
    size = 1024
    while True:
        k = np.arange(size, dtype=float)
        w = np.exp(-(k**alpha))
        s0 = np.cumsum(w)
        s1 = np.cumsum(k * w)
        s2 = np.cumsum(k * k * w)
        ok = k >= start
        for p, part in enumerate((s0, s1, s2)):
            with np.errstate(divide="ignore", invalid="ignore"):
                log_tail = _log_tail_integral(alpha, p, np.maximum(k, 1.0))
                ok &= log_tail < math.log(tol) + np.log(part)
        hits = np.flatnonzero(ok)
        if hits.size:
            K = int(hits[0])
            break
        if size > 1 << 34:
            raise DomainError(f"series for alpha={alpha} did not converge")
        size *= 4
    z, m1, m2 = s0[K], s1[K], s2[K]
    mu = m1 / z
    return ModelParams(
        alpha=float(alpha),
        c=float(1.0 / z),
        mu=float(mu),
        sigma2=float(m2 / z - mu * mu),
        gamma=1.0 / (2.0 - alpha),
        series_tol=float(tol),
    )


def log_pmf(params: ModelParams, k):
    k = np.asarray(k)
    if np.any(k < 0):
        raise DomainError("pmf is supported on k >= 0")
    out = math.log(params.c) - k.astype(float) ** params.alpha
    return float(out) if out.ndim == 0 else out


def pmf(params: ModelParams, k):
    """``c * exp(-k**alpha)``; accepts scalars or integer arrays."""
    out = np.exp(log_pmf(params, k))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TruncatedCgf:
    """``log sum_{j<=cutoff} c exp(-j**alpha + t*j)``."""

    params: ModelParams
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise DomainError("cutoff must be >= 1")

    @cached_property
    def support(self) -> np.ndarray:
        return np.arange(self.cutoff + 1, dtype=float)

    @cached_property
    def log_weights(self) -> np.ndarray:
        return math.log(self.params.c) - self.support**self.params.alpha

    def tilted_log_probs(self, t: float) -> tuple[np.ndarray, float]:
        """Log-probabilities of the tilted truncated law and phi(t)."""
        e = self.log_weights + t * self.support
        m = e.max()
        lse = m + math.log(np.exp(e - m).sum())
        return e - lse, lse

    def value(self, t: float) -> float:
        return self.tilted_log_probs(t)[1]

    def derivs(self, t: float) -> tuple[float, float, float]:
        logp, _ = self.tilted_log_probs(t)
        p = np.exp(logp)
        j = self.support
        mean = float(p @ j)
        d = j - mean
        return mean, float(p @ (d * d)), float(p @ (d * d * d))


def cgf(tcgf: TruncatedCgf, t: float) -> float:
    return tcgf.value(t)


def cgf_derivs(tcgf: TruncatedCgf, t: float) -> tuple[float, float, float]:
    """First three derivatives: mean, variance, third cumulant of the tilted law."""
    return tcgf.derivs(t)


def solve_tilt(tcgf: TruncatedCgf, target_mean: float, max_iter: int = 500) -> float:
    """Unique t with ``phi'(t) == target_mean``.

    The bracket starts at [-1, 1] and is doubled outward; then Newton steps
    are taken, falling back to bisection whenever a step leaves the bracket.
    """
    if not (0.0 < target_mean < tcgf.cutoff):
        raise NoSolutionError(
            f"target mean {target_mean!r} outside (0, {tcgf.cutoff}) for the "
            "truncated law"
        )
    tol = 1e-10 * max(1.0, abs(target_mean))

    def resid(t):
        m, v, _ = tcgf.derivs(t)
        return m - target_mean, v

    lo, hi = -1.0, 1.0
    while resid(lo)[0] > 0:
        lo *= 2.0
    while resid(hi)[0] < 0:
        hi *= 2.0
    t = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(max_iter):
        r, v = resid(t)
        if abs(r) <= tol:
            return t
        if r > 0:
            hi = t
        else:
            lo = t
        step = t - r / v if v > 0 else math.nan
        t = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(t)):
            break
    r, _ = resid(t)
    if abs(r) <= tol:
        return t
    raise NoSolutionError(f"tilt solver stalled with residual {r:.3e}")


def gaussian_exponent(params: ModelParams, s: float, n: int) -> float:
    """Leading Gaussian cost ``s**2 / (2 sigma2) * n**(2 gamma - 1)``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return s * s / (2.0 * params.sigma2) * n ** (2.0 * params.gamma - 1.0)


def kappa_limit(params: ModelParams, s_max: float) -> float:
    """Largest admissible truncation level (in units of n**gamma).

    A tilt ``c1 * n**(gamma-1)`` keeps ``sum_{j <= kappa n^gamma}
    exp(t j - j^alpha)`` bounded when ``kappa < c1**(-1/(1-alpha))``; with
    ``c1`` just above ``s_max / sigma2`` this is
    ``(sigma2 / s_max)**(1/(1-alpha))``.
    """
    if s_max <= 0:
        return math.inf
    return (params.sigma2 / s_max) ** (1.0 / (1.0 - params.alpha))


def validate_kappa(params: ModelParams, s: float, kappa: float) -> float:
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    lim = kappa_limit(params, abs(s))
    if not kappa < lim:
        raise DomainError(f"kappa={kappa} violates kappa < {lim:.6g} at s={s}")
    return kappa


def truncated_moment_sum(alpha: float, k_power: int, t: float, cutoff: int) -> float:
    """``sum_{j=1..cutoff} j**k exp(t j - j**alpha)`` (log-sum-exp evaluated)."""
    j = np.arange(1, cutoff + 1, dtype=float)
    e = k_power * np.log(j) + t * j - j**alpha
    m = e.max()
    return float(math.exp(m) * np.exp(e - m).sum())
