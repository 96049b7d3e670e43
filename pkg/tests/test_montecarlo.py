import math

import numpy as np
import pytest

from condensate_ldp import exactlaw, ratefn
from condensate_ldp.exceptions import DomainError, NoSolutionError
from condensate_ldp.model import TruncatedCgf, derive_params
from condensate_ldp.montecarlo import (
    batch_rng,
    build_sampler,
    estimate_conditioned,
    make_sampler,
    mc_max_histogram,
)

P = derive_params(0.5)
TH = ratefn.thresholds(P)


def test_sampler_table_and_mean():
    sm = build_sampler(P, 256, 1.0, 1.0, 3)
    assert np.all(np.diff(sm.table) > 0)
    assert sm.table[-1] == pytest.approx(1.0, abs=1e-12)
    x = sm.draw(batch_rng(3, 0), (1000, 1000))
    mean, var, _ = TruncatedCgf(P, sm.cutoff).derivs(sm.t)
    assert abs(x.mean() - mean) <= 5 * math.sqrt(var / x.size)
    N, s_n = exactlaw.lattice_target(P, 1.0, 256)
    assert mean == pytest.approx(P.mu + s_n * 256 ** (P.gamma - 1), rel=1e-9)


def test_zero_excess_sampler_is_nearly_untilted():
    n = 512
    sm = build_sampler(P, n, 0.0, 2.0, 1)
    N, _ = exactlaw.lattice_target(P, 0.0, n)
    tc = TruncatedCgf(P, sm.cutoff)
    # target N/n differs from mu only by the floor and the truncation
    assert abs(sm.t) < 2 * abs(N / n - tc.derivs(0.0)[0]) / tc.derivs(0.0)[1] + 1e-9
    untilted = np.cumsum(np.exp(tc.tilted_log_probs(0.0)[0]))
    assert np.max(np.abs(sm.table - untilted)) < 5e-3


def test_same_seed_same_stream():
    a = build_sampler(P, 64, 1.0, 2.0, 11).draw(batch_rng(11, 2), (50, 64))
    b = build_sampler(P, 64, 1.0, 2.0, 11).draw(batch_rng(11, 2), (50, 64))
    c = build_sampler(P, 64, 1.0, 2.0, 11).draw(batch_rng(12, 2), (50, 64))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_point_mass_sampler():
    sm = make_sampler(P, 0, 0.0, 1)
    assert np.all(sm.draw(batch_rng(1), (3, 4)) == 0)
    with pytest.raises(DomainError):
        make_sampler(P, -1, 0.0, 1)


def test_estimate_matches_exact_n64():
    n, s, kappa = 64, 1.0, 2.0
    sm = build_sampler(P, n, s, kappa, 2024)
    N, _ = exactlaw.lattice_target(P, s, n)
    est = estimate_conditioned(sm, n, N, 10, 20_000)
    exact = exactlaw.log_sum_prob(P, n, N, sm.cutoff)
    assert est.hit_count >= 100
    assert abs(est.log_probability - exact) <= 3 * est.standard_error_log


def test_kappa_too_small_for_target():
    # cutoff floor(0.3 * 16) = 4 lies below the target mean 4.72
    with pytest.raises(NoSolutionError):
        build_sampler(P, 64, 1.0, 0.3, 0)


def test_hit_rate_scales_like_inverse_sqrt_n():
    rates = []
    for n in (64, 256):
        sm = build_sampler(P, n, 1.0, 2.0, 5)
        N, _ = exactlaw.lattice_target(P, 1.0, n)
        rates.append(estimate_conditioned(sm, n, N, 10, 20_000).hit_count)
    ratio = rates[1] / rates[0]
    assert 0.5 * 0.5 <= ratio <= 2 * 0.5


def test_doubling_batch_size_halves_variance():
    n = 64
    sm = build_sampler(P, n, 1.0, 2.0, 8)
    N, _ = exactlaw.lattice_target(P, 1.0, n)
    a = estimate_conditioned(sm, n, N, 40, 5_000)
    b = estimate_conditioned(sm, n, N, 40, 10_000)
    ratio = b.standard_error_log**2 / a.standard_error_log**2
    assert 0.25 <= ratio <= 1.0


def test_threads_do_not_change_results():
    n = 64
    sm = build_sampler(P, n, 1.0, 2.0, 9)
    N, _ = exactlaw.lattice_target(P, 1.0, n)
    assert estimate_conditioned(sm, n, N, 4, 5_000, threads=1) == estimate_conditioned(sm, n, N, 4, 5_000, threads=4)


def test_zero_hits_warns():
    sm = build_sampler(P, 64, 1.0, 2.0, 1)
    with pytest.warns(RuntimeWarning):
        est = estimate_conditioned(sm, 64, 5000, 2, 10)
    assert est.log_probability == -math.inf and est.standard_error_log == math.inf


def _exact_bins(n, N, edges):
    sc = n**P.gamma
    his = [-1] + [math.ceil(e * sc) - 1 for e in edges[1:-1]] + [N]
    return np.diff(exactlaw.conditioned_max_cdf(P, n, N, his))


@pytest.mark.parametrize(
    "s,kappa,inner",
    [(2 * TH.s1, 1.0, [1, 2, 4, 8, 16, 32, 40, 44, 46, 48, 52]), (1.0, 2.0, [0.5, 1, 1.5, 2, 3])],
    ids=["condensed", "gaussian"],
)
def test_histogram_matches_exact_n64(s, kappa, inner):
    n = 64
    N, _ = exactlaw.lattice_target(P, s, n)
    edges = [0.0] + inner + [N / n**P.gamma + 1e-9]
    h = mc_max_histogram(P, n, s, kappa, edges, 3, batches=10, batch_size=20_000)
    ex = _exact_bins(n, N, edges)
    live = ~h.empty
    z = np.abs(h.probabilities[live] - ex[live]) / h.standard_errors[live]
    assert np.all(z <= 3)
    # bins never hit carry negligible exact mass
    assert np.all(ex[~live] < 1e-4)
    assert abs(h.probabilities.sum() - 1) <= 3 * np.sqrt(np.sum(h.standard_errors[live] ** 2))


def test_histogram_rejects_bad_edges():
    with pytest.raises(DomainError):
        mc_max_histogram(P, 64, 1.0, 2.0, [0, 2, 1], 0)


@pytest.mark.slow
def test_histogram_mode_at_y2_n1024():
    n, s = 1024, 2 * TH.s1
    y2 = ratefn.critical_points(P, s)[1]
    N, _ = exactlaw.lattice_target(P, s, n)
    edges = [0.0, 24, 36, 42, 48, 54, 66, N / n**P.gamma + 1e-9]
    h = mc_max_histogram(P, n, s, 1.0, edges, 11, batches=10, batch_size=4000)
    k = int(np.argmax(h.probabilities))
    assert edges[k] <= y2 < edges[k + 1]
