"""Importance sampling of conditioned probabilities with a tilted, truncated law.

Under the law ``P(X^ = k) ∝ 1{k <= cutoff} exp(t k - k**alpha)``

    P(S_n = N, M_n <= cutoff) = exp(n phi(t) - N t) * P(S^_n = N),

where ``phi`` is the truncated cumulant generating function. The tilt is
chosen so that ``E X^ = N / n``, which makes ``{S^_n = N}`` a central event.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DomainError, NoSolutionError
from .exactlaw import lattice_target
from .model import ModelParams, TruncatedCgf, solve_tilt, validate_kappa

__all__ = [
    "TiltedSampler",
    "McEstimate",
    "MaxHistogram",
    "make_sampler",
    "build_sampler",
    "batch_rng",
    "estimate_conditioned",
    "mc_max_histogram",
]

CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class TiltedSampler:
    params: ModelParams
    cutoff: int
    t: float
    table: np.ndarray = field(repr=False)
    log_norm: float
    seed: int

    def draw(self, rng: np.random.Generator, size: tuple[int, int]) -> np.ndarray:
        """Inverse-CDF draws on ``0..cutoff``."""
        if self.cutoff == 0:
            return np.zeros(size, dtype=np.int64)
        x = np.searchsorted(self.table, rng.random(size), side="right")
        return np.minimum(x, self.cutoff)

    def log_weight(self, n: int, N: int) -> float:
        """``n phi(t) - N t``: the constant likelihood ratio on ``{S^_n = N}``."""
        return n * self.log_norm - N * self.t


@dataclass(frozen=True)
class McEstimate:
    log_probability: float
    standard_error_log: float
    n_samples: int
    hit_count: int
    seed: int = 0

    @property
    def probability(self) -> float:
        return math.exp(self.log_probability)


def make_sampler(params: ModelParams, cutoff: int, t: float, seed: int) -> TiltedSampler:
    """Sampler for a given cutoff and tilt; ``cutoff=0`` is the point mass at 0."""
    if cutoff < 0:
        raise DomainError("cutoff must be >= 0")
    if cutoff == 0:
        return TiltedSampler(params, 0, float(t), np.ones(1), math.log(params.c), int(seed))
    logp, phi = TruncatedCgf(params, cutoff).tilted_log_probs(t)
    table = np.cumsum(np.exp(logp))
    table /= table[-1]
    return TiltedSampler(params, int(cutoff), float(t), table, float(phi), int(seed))


def build_sampler(
    params: ModelParams, n: int, s: float, kappa: float, seed: int
) -> TiltedSampler:
    """Sampler at cutoff ``floor(kappa n**gamma)`` tilted to mean ``mu + s_n n**(gamma-1)``."""
    validate_kappa(params, s, kappa)
    cutoff = math.floor(kappa * n**params.gamma)
    N, s_n = lattice_target(params, s, n)
    if cutoff < 1:
        raise NoSolutionError(f"cutoff {cutoff} leaves no room for a tilt")
    t = solve_tilt(TruncatedCgf(params, cutoff), params.mu + s_n * n ** (params.gamma - 1.0))
    return make_sampler(params, cutoff, t, seed)


def batch_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, *stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _count_hits(sampler: TiltedSampler, rng, n: int, N: int, size: int, min_max: int = 0) -> int:
    rows = max(1, CHUNK_CELLS // n)
    hits = 0
    done = 0
    while done < size:
        k = min(rows, size - done)
        x = sampler.draw(rng, (k, n))
        hit = x.sum(axis=1) == N
        if min_max > 0 and hit.any():
            hits += int((x[hit].max(axis=1) >= min_max).sum())
        else:
            hits += int(hit.sum())
        done += k
    return hits


def _batch_counts(sampler, n, N, batches, batch_size, threads, stream=(), min_max=0):
    def one(b):
        return _count_hits(sampler, batch_rng(sampler.seed, *stream, b), n, N, batch_size, min_max)

    if threads <= 1:
        return np.array([one(b) for b in range(batches)])
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return np.array(list(ex.map(one, range(batches))))


def estimate_conditioned(
    sampler: TiltedSampler, n: int, N: int, batches: int, batch_size: int, threads: int = 1
) -> McEstimate:
    """Estimate ``log P(S_n = N, M_n <= cutoff)`` with a batch-means error bar."""
    if batches < 2:
        raise DomainError("need at least two batches for an error bar")
    counts = _batch_counts(sampler, n, N, batches, batch_size, threads)
    hits = int(counts.sum())
    total = batches * batch_size
    if hits == 0:
        warnings.warn(
            "no hits: variance is infinite; enlarge sampling or adjust the tilt",
            RuntimeWarning,
            stacklevel=2,
        )
        return McEstimate(-math.inf, math.inf, total, 0, sampler.seed)
    frac = counts / batch_size
    p_hat = frac.mean()
    se = frac.std(ddof=1) / math.sqrt(batches)
    return McEstimate(
        sampler.log_weight(n, N) + math.log(p_hat),
        se / p_hat,
        total,
        hits,
        sampler.seed,
    )


@dataclass(frozen=True)
class MaxHistogram:
    """Conditional law of ``M_n / n**gamma`` given ``S_n = N`` over bins.

    ``empty`` marks bins without a single hit (or infeasible under the sum
    constraint); their probabilities are reported as zero with infinite
    error, never interpolated.
    """

    edges: np.ndarray
    probabilities: np.ndarray
    standard_errors: np.ndarray
    hits: np.ndarray
    empty: np.ndarray
    estimates: list
    seed: int
    N: int


def _bin_ranges(edges, scale, N):
    """Integer ranges ``[lo, hi]`` for ``M`` with ``M / scale`` in ``[e_k, e_{k+1})``."""
    out = []
    for k in range(len(edges) - 1):
        lo = math.ceil(edges[k] * scale)
        hi = math.ceil(edges[k + 1] * scale) - 1
        if k == len(edges) - 2:
            hi = max(hi, math.floor(edges[k + 1] * scale))
        out.append((lo, min(hi, N)))
    return out


def mc_max_histogram(
    params: ModelParams,
    n: int,
    s: float,
    kappa: float,
    y_bins: Sequence[float],
    seed: int,
    batches: int = 10,
    batch_size: int = 20_000,
    threads: int = 1,
) -> MaxHistogram:
    """Histogram of the rescaled maximum under ``P(. | S_n = N)``.

    Values of the maximum up to the truncation ``kappa n**gamma`` come from
    one shared tilted run at that cutoff. Larger values get a run per bin
    mixing a capped tilt with a planted maximum (see :func:`_bin_batches`). Conditional
    probabilities are normalised over the bins, so the bins should cover
    ``[0, N / n**gamma]``. Errors come from a jackknife over batches; batch
    ``b`` of run ``r`` is drawn from stream ``(seed, r, b)``.
    """
    validate_kappa(params, s, kappa)
    if n < 2 or batches < 2:
        raise DomainError("need n >= 2 and at least two batches")
    edges = np.asarray(y_bins, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise DomainError("y_bins must be increasing edges starting at >= 0")
    N, _ = lattice_target(params, s, n)
    scale = n**params.gamma
    cutoff = math.floor(kappa * scale)
    ranges = _bin_ranges(edges, scale, N)
    K = len(ranges)
    log_batch = np.full((K, batches), -math.inf)
    hits = np.zeros(K, dtype=np.int64)

    # maxima at or below the cutoff: one shared run
    low = [(k, lo, min(hi, cutoff)) for k, (lo, hi) in enumerate(ranges) if lo <= min(hi, cutoff)]
    if low and cutoff * n > N:
        sampler = make_sampler(params, cutoff, solve_tilt(TruncatedCgf(params, cutoff), N / n), seed)
        counts = _shared_counts(sampler, n, N, batches, batch_size, [(lo, hi) for _, lo, hi in low], threads)
        base = sampler.log_weight(n, N) - math.log(batch_size)
        for row, (k, _, _) in enumerate(low):
            with np.errstate(divide="ignore"):
                log_batch[k] = base + np.log(counts[row])
            hits[k] += counts[row].sum()
    elif low and cutoff * n == N:
        # only the all-cutoff configuration remains
        k = next(k for k, lo, hi in low if lo <= cutoff <= hi)
        log_batch[k] = n * (math.log(params.c) - cutoff**params.alpha)
        hits[k] += batches * batch_size

    # maxima above the cutoff: one mixed run per bin
    for k, (lo, hi) in enumerate(ranges):
        a = max(lo, cutoff + 1)
        if a > hi:
            continue
        res = _bin_batches(params, n, N, a, hi, seed, k + 1, batches, batch_size, threads)
        if res is None:
            continue
        lb, h = res
        log_batch[k] = np.logaddexp(log_batch[k], lb)
        hits[k] += h

    ref = np.max(log_batch)
    per_batch = np.exp(log_batch - ref) if np.isfinite(ref) else np.zeros_like(log_batch)
    probs, ses = _jackknife_ratio(per_batch)
    empty = hits == 0
    probs = np.where(empty, 0.0, probs)
    ses = np.where(empty, np.inf, ses)
    total = batches * batch_size
    estimates = [
        McEstimate(
            math.log(p) if p > 0 else -math.inf,
            se / p if p > 0 else math.inf,
            total,
            int(h),
            seed,
        )
        for p, se, h in zip(probs, ses, hits)
    ]
    return MaxHistogram(edges, probs, ses, hits, empty, estimates, int(seed), N)


def _bin_batches(params, n, N, a, b, seed, stream, batches, batch_size, threads):
    """Per-batch log estimates of ``P(a <= M_n <= b, S_n = N)``.

    Two proposals share the batch, and each hit is weighted by the balance
    heuristic ``f / (nu_1 p_1 + nu_2 p_2)``:

    * ``p_1``: all ``n`` coordinates i.i.d. from the law tilted to mean
      ``N / n`` and capped at ``b`` (good when several coordinates are
      large);
    * ``p_2``: one planted coordinate ``m`` from a proposal ``q`` on
      ``[a, b]`` at a uniform position, the other ``n - 1`` from a law capped
      at ``b`` tilted to the remaining mean (good for a single big value).

    ``p_2(x) = (1/n) sum_i 1{x_i in [a, b]} q(x_i) prod_{j != i} p(x_j)``
    is evaluated exactly, ties included. Returns ``None`` when no
    configuration with maximum in ``[a, b]`` has sum ``N``.
    """
    r = n - 1
    lo = max(a, -(-N // n))
    hi = min(b, N)
    if lo > hi:
        return None
    cap = int(hi)
    m_vals = np.arange(lo, hi + 1)
    mf = m_vals.astype(float)
    log_pmf_all = math.log(params.c) - np.arange(cap + 1, dtype=float) ** params.alpha
    # planted value weighted by the Gaussian cost of the remainder
    log_q = log_pmf_all[lo:] - (N - mf - params.mu * r) ** 2 / (2.0 * params.sigma2 * r)
    log_q = log_q - (log_q.max() + math.log(np.exp(log_q - log_q.max()).sum()))
    q = np.exp(log_q)
    cdf = np.cumsum(q)
    cdf /= cdf[-1]

    def tilted(target):
        if cap == 0:
            return np.zeros(1), make_sampler(params, 0, 0.0, seed)
        target = min(max(target, 0.5 * min(1.0, cap)), cap - 0.5)
        tc = TruncatedCgf(params, cap)
        t = solve_tilt(tc, target)
        return tc.tilted_log_probs(t)[0], make_sampler(params, cap, t, seed)

    use_full = cap * n > N
    logp1, full = tilted(N / n) if use_full else (None, None)
    logp2, rest = tilted((N - m_vals @ q) / r)
    n1 = batch_size // 2 if use_full else 0
    n2 = batch_size - n1
    log_nu1 = math.log(n1 / batch_size) if n1 else -math.inf
    log_nu2 = math.log(n2 / batch_size)
    # log q(x) - log p_rest(x) on [lo, cap], -inf elsewhere
    plant = np.full(cap + 1, -math.inf)
    plant[lo:] = log_q - logp2[lo:]

    def weights(x):
        """Balance-heuristic log weights for hit rows ``x``."""
        log_f = log_pmf_all[x].sum(axis=1)
        terms = plant[x]
        top = terms.max(axis=1)
        lse = top + np.log(np.exp(terms - top[:, None]).sum(axis=1))
        log_p2 = logp2[x].sum(axis=1) + lse - math.log(n)
        if n1:
            den = np.logaddexp(log_nu1 + logp1[x].sum(axis=1), log_nu2 + log_p2)
        else:
            den = log_nu2 + log_p2
        return log_f - den

    def hits_of(x):
        mx = x.max(axis=1)
        return x[(x.sum(axis=1) == N) & (mx >= a) & (mx <= b)]

    def one(bi):
        rng = batch_rng(seed, stream, bi)
        rows = max(1, CHUNK_CELLS // n)
        logs = []
        done = 0
        while done < n1:
            kk = min(rows, n1 - done)
            h = hits_of(full.draw(rng, (kk, n)))
            if len(h):
                logs.append(weights(h))
            done += kk
        done = 0
        while done < n2:
            kk = min(rows, n2 - done)
            idx = np.minimum(np.searchsorted(cdf, rng.random(kk), side="right"), len(cdf) - 1)
            x = np.concatenate([m_vals[idx][:, None], rest.draw(rng, (kk, r))], axis=1)
            h = hits_of(x)
            if len(h):
                logs.append(weights(h))
            done += kk
        if not logs:
            return -math.inf, 0
        lw = np.concatenate(logs)
        top = lw.max()
        return top + math.log(np.exp(lw - top).sum()) - math.log(batch_size), len(lw)

    if threads <= 1:
        out = [one(bi) for bi in range(batches)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, range(batches)))
    return np.array([o[0] for o in out]), int(sum(o[1] for o in out))


def _shared_counts(sampler, n, N, batches, batch_size, ranges, threads):
    """Hits with the maximum in each of ``ranges``; one pass over stream 0."""
    los = np.array([r[0] for r in ranges])
    his = np.array([r[1] for r in ranges])

    def one(b):
        rng = batch_rng(sampler.seed, 0, b)
        rows = max(1, CHUNK_CELLS // n)
        done = 0
        c = np.zeros(len(ranges), dtype=np.int64)
        while done < batch_size:
            k = min(rows, batch_size - done)
            x = sampler.draw(rng, (k, n))
            hit = x.sum(axis=1) == N
            if hit.any():
                m = x[hit].max(axis=1)
                c += ((m[None, :] >= los[:, None]) & (m[None, :] <= his[:, None])).sum(axis=1)
            done += k
        return c

    if threads <= 1:
        out = [one(b) for b in range(batches)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, range(batches)))
    return np.array(out).T


def _jackknife_ratio(per_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bin shares ``B_k / sum_j B_j`` and their delete-one jackknife errors."""
    K, B = per_batch.shape
    tot = per_batch.sum(axis=1)
    grand = tot.sum()
    if grand <= 0:
        return np.zeros(K), np.full(K, np.inf)
    full = tot / grand
    loo = (tot[:, None] - per_batch) / (grand - per_batch.sum(axis=0))[None, :]
    mean = loo.mean(axis=1, keepdims=True)
    se = np.sqrt((B - 1) / B * ((loo - mean) ** 2).sum(axis=1))
    return full, se
