import math

import numpy as np
import pytest

from condensate_ldp.exceptions import ConfigurationError, DomainError
from condensate_ldp.zrp import (
    ZrpConfig,
    ZrpState,
    condensation_time,
    detailed_balance_residual,
    exact_law,
    initial_occupations,
    jump_rate,
    jump_rates,
    run,
    stationary_check,
    step,
    transition_probability,
)


def test_jump_rate_examples():
    assert jump_rate(0.5, 0) == 0.0
    assert jump_rate(0.5, 1) == pytest.approx(math.e, rel=1e-15)
    k = 10**4
    assert abs(jump_rate(0.5, k) - 1 - 0.5 / k**0.5) <= 1e-4
    with pytest.raises(DomainError):
        jump_rate(0.5, -1)


def test_rates_decrease_to_one():
    g = jump_rates(0.5, 10**6)
    assert g[0] == 0.0
    assert np.all(np.diff(g[1:]) < 0)
    assert np.all(g[1:] > 1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_sites=1, n_particles=3, alpha=0.5),
        dict(n_sites=3, n_particles=-1, alpha=0.5),
        dict(n_sites=3, n_particles=3, alpha=1.0),
        dict(n_sites=3, n_particles=3, alpha=0.5, topology="star"),
        dict(n_sites=3, n_particles=3, alpha=0.5, initial=(1, 1, 0)),
        dict(n_sites=3, n_particles=3, alpha=0.5, initial="random"),
        dict(n_sites=3, n_particles=3, alpha=0.5, seed=-1),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        ZrpConfig(**kwargs)


def test_config_json_roundtrip():
    c = ZrpConfig(3, 4, 0.5, "ring", 7, (1, 2, 1))
    assert ZrpConfig.from_json(c.to_json()) == c
    assert c.config_hash() == ZrpConfig.from_json(c.to_json()).config_hash()


@pytest.mark.parametrize("topology", ["complete", "ring"])
@pytest.mark.parametrize("n", [2, 3, 5])
def test_transition_matrix_symmetric_stochastic(topology, n):
    c = ZrpConfig(n, 1, 0.5, topology)
    p = np.array([[transition_probability(c, x, y) for y in range(n)] for x in range(n)])
    assert np.allclose(p, p.T)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.all(np.diag(p) == 0)


def test_uniform_spread_remainder_on_low_sites():
    c = ZrpConfig(4, 10, 0.5)
    assert initial_occupations(c).tolist() == [3, 3, 2, 2]
    assert initial_occupations(ZrpConfig(4, 10, 0.5, initial="all_at_site_1")).tolist() == [10, 0, 0, 0]


def test_step_conserves_particles():
    c = ZrpConfig(5, 17, 0.5, seed=1)
    rng = np.random.default_rng(1)
    st = ZrpState(initial_occupations(c))
    for _ in range(500):
        st = step(st, c, rng)
        assert st.occupations.sum() == 17 and st.occupations.min() >= 0
    assert st.jump_count == 500 and st.time > 0


def test_single_particle_rate_and_destinations():
    c = ZrpConfig(4, 1, 0.5, initial=(1, 0, 0, 0))
    rng = np.random.default_rng(2)
    dts, dest = [], []
    for _ in range(20_000):
        st = step(ZrpState(np.array([1, 0, 0, 0])), c, rng)
        dts.append(st.time)
        dest.append(int(np.argmax(st.occupations)))
    assert np.mean(dts) == pytest.approx(1 / math.e, rel=0.03)
    counts = np.bincount(dest, minlength=4)
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] / 20_000 - 1 / 3) < 0.02)


def test_two_sites_blocked_empty_site():
    c = ZrpConfig(2, 2, 0.5, initial=(2, 0))
    rng = np.random.default_rng(3)
    dts = []
    for _ in range(20_000):
        st = step(ZrpState(np.array([2, 0])), c, rng)
        assert st.occupations.tolist() == [1, 1]
        dts.append(st.time)
    assert np.mean(dts) == pytest.approx(1 / jump_rate(0.5, 2), rel=0.03)


def test_step_on_empty_system():
    c = ZrpConfig(3, 0, 0.5)
    with pytest.raises(DomainError):
        step(ZrpState(np.zeros(3, dtype=np.int64)), c, np.random.default_rng(0))


def test_run_smoke_cases():
    empty = run(ZrpConfig(4, 0, 0.5), max_time=5.0)
    assert empty.jumps == 0 and empty.final.occupations.sum() == 0
    c = ZrpConfig(3, 6, 0.5, seed=4)
    zero = run(c, max_jumps=0)
    assert zero.jumps == 0 and zero.final.occupations.tolist() == [2, 2, 2]
    hit = run(c, hit=lambda eta: True)
    assert hit.hit and hit.elapsed == 0.0 and hit.jumps == 0
    with pytest.raises(ConfigurationError):
        run(c)


def test_run_deterministic_and_conserving():
    c = ZrpConfig(6, 30, 0.5, "ring", seed=5)
    a = run(c, max_jumps=5000, observe_every=50)
    b = run(c, max_jumps=5000, observe_every=50)
    assert a.samples == b.samples and a.elapsed == b.elapsed
    assert all(sum(occ) == 30 for _, _, occ in a.samples)
    assert len(a.samples) == 101


def test_run_stops_at_max_time():
    c = ZrpConfig(3, 6, 0.5, seed=6)
    r = run(c, max_time=2.5)
    assert r.elapsed == 2.5 and r.jumps > 0


def test_exact_law_small_cases():
    states, probs = exact_law(2, 1, 0.5)
    assert sorted(states) == [(0, 1), (1, 0)]
    assert np.allclose(probs, 0.5)
    states, probs = exact_law(3, 6, 0.5)
    assert len(states) == 28
    assert probs.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ConfigurationError):
        exact_law(5, 6, 0.5)
    with pytest.raises(ConfigurationError):
        exact_law(3, 13, 0.5)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_stationarity_tv(seed):
    c = ZrpConfig(3, 6, 0.5, seed=seed)
    long = stationary_check(c, 10**6)
    short = stationary_check(c, 10**4)
    assert long.tv <= 0.02
    assert long.tv < short.tv


def test_thinned_stationarity_is_coarser():
    # 10^4 weighted snapshots resolve the 28-state law only to a few percent
    c = ZrpConfig(3, 6, 0.5, seed=1)
    assert stationary_check(c, 10**6, thin=100).tv <= 0.05


def test_complete_graph_exchangeable():
    rep = stationary_check(ZrpConfig(3, 6, 0.5, seed=9), 2 * 10**5)
    marg = np.zeros((3, 7))
    for st, p in zip(rep.states, rep.empirical):
        for x, k in enumerate(st):
            marg[x, k] += p
    assert np.max(np.abs(marg - marg.mean(axis=0))) < 0.02


@pytest.mark.parametrize("topology", ["complete", "ring"])
def test_detailed_balance(topology):
    assert detailed_balance_residual(ZrpConfig(4, 12, 0.5, topology, seed=3), 100) <= 1e-12
    assert detailed_balance_residual(ZrpConfig(3, 6, 0.3, topology, seed=4), 100) <= 1e-12


def test_condensation_time_properties():
    c = ZrpConfig(20, 200, 0.5, seed=4)
    tiny = condensation_time(c, 0.01, 4, 100.0)
    assert np.all(tiny.times == 0.0)
    meds = [condensation_time(c, th, 12, 2e4).median for th in (0.3, 0.6, 0.9)]
    assert meds[0] < meds[1] < meds[2]
    a = condensation_time(c, 0.6, 6, 2e4)
    b = condensation_time(c, 0.6, 6, 2e4, threads=3)
    assert np.array_equal(a.times, b.times)


def test_condensation_censoring_and_errors():
    c = ZrpConfig(20, 200, 0.5, seed=4)
    h = condensation_time(c, 0.9, 3, 1.0)
    assert np.all(h.censored) and np.all(h.times == 1.0)
    with pytest.raises(DomainError):
        condensation_time(ZrpConfig(10, 10, 0.5), 0.5, 2, 10.0)
    with pytest.raises(ConfigurationError):
        condensation_time(ZrpConfig(10, 100, 0.5, initial="all_at_site_1"), 0.5, 2, 10.0)
