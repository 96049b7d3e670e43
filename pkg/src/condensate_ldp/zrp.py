"""Zero-range process whose stationary law is the conditioned product law.

A particle leaves site ``x`` at rate ``g(eta_x)`` with
``g(k) = exp(k**alpha - (k-1)**alpha)`` and ``g(0) = 0``, and moves to ``y``
with probability ``p(x, y)``. For symmetric ``p`` the invariant law on
configurations with ``N`` particles is ``pi(eta) ∝ prod_x exp(-eta_x**alpha)``.

Simulation is Gillespie with departure sites drawn from a sum tree of site
rates, so a jump costs O(log n). Uniform draws come in blocks from a Philox
stream keyed by the configuration seed.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigurationError, DomainError, InvariantViolation
from .model import derive_params

__all__ = [
    "ZrpConfig",
    "ZrpState",
    "RunSummary",
    "StationaryReport",
    "HittingTimes",
    "jump_rate",
    "jump_rates",
    "transition_probability",
    "initial_occupations",
    "step",
    "run",
    "exact_law",
    "stationary_check",
    "detailed_balance_residual",
    "condensation_time",
]

MAX_EXACT_SITES = 4
MAX_EXACT_PARTICLES = 12
_BLOCK = 4096


@dataclass(frozen=True)
class ZrpConfig:
    n_sites: int
    n_particles: int
    alpha: float
    topology: str = "complete"
    seed: int = 0
    initial: Union[str, tuple] = "uniform_spread"

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise DomainError("n_sites must be an integer >= 2")
        if int(self.n_particles) != self.n_particles or self.n_particles < 0:
            raise DomainError("n_particles must be an integer >= 0")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if self.topology not in ("complete", "ring"):
            raise DomainError(f"unknown topology {self.topology!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit nonnegative integer")
        if isinstance(self.initial, str):
            if self.initial not in ("uniform_spread", "all_at_site_1"):
                raise DomainError(f"unknown initial condition {self.initial!r}")
        else:
            vec = tuple(int(v) for v in self.initial)
            if len(vec) != self.n_sites or min(vec) < 0 or sum(vec) != self.n_particles:
                raise DomainError("explicit initial vector must have n_sites nonnegative entries summing to n_particles")
            object.__setattr__(self, "initial", vec)

    def to_json(self) -> str:
        d = asdict(self)
        if not isinstance(self.initial, str):
            d["initial"] = list(self.initial)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ZrpConfig":
        d = json.loads(text)
        if isinstance(d.get("initial"), list):
            d["initial"] = tuple(d["initial"])
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ZrpState:
    occupations: np.ndarray
    time: float = 0.0
    jump_count: int = 0


def jump_rate(alpha: float, k: int) -> float:
    """``g(k)``; zero on an empty site."""
    if k < 0:
        raise DomainError("occupation must be >= 0")
    if k == 0:
        return 0.0
    return math.exp(k**alpha - (k - 1) ** alpha)


def jump_rates(alpha: float, k_max: int) -> np.ndarray:
    """``g(0), ..., g(k_max)`` as an array."""
    k = np.arange(1, k_max + 1, dtype=float)
    return np.concatenate([[0.0], np.exp(k**alpha - (k - 1.0) ** alpha)])


def transition_probability(config: ZrpConfig, x: int, y: int) -> float:
    n = config.n_sites
    if x == y:
        return 0.0
    if config.topology == "complete":
        return 1.0 / (n - 1)
    if n == 2:
        return 1.0
    return 0.5 if (y - x) % n in (1, n - 1) else 0.0


def initial_occupations(config: ZrpConfig) -> np.ndarray:
    """Starting configuration.

    ``uniform_spread`` puts ``N // n`` everywhere and one more particle on
    each of the first ``N % n`` sites.
    """
    n, N = config.n_sites, config.n_particles
    if config.initial == "uniform_spread":
        eta = np.full(n, N // n, dtype=np.int64)
        eta[: N % n] += 1
    elif config.initial == "all_at_site_1":
        eta = np.zeros(n, dtype=np.int64)
        eta[0] = N
    else:
        eta = np.array(config.initial, dtype=np.int64)
    return eta


def _destination(config: ZrpConfig, x: int, u: float) -> int:
    n = config.n_sites
    if config.topology == "complete":
        j = min(int(u * (n - 1)), n - 2)
        return j if j < x else j + 1
    return (x + 1) % n if u < 0.5 else (x - 1) % n


def step(state: ZrpState, config: ZrpConfig, rng: np.random.Generator) -> ZrpState:
    """One Gillespie jump, computed directly from the current rates."""
    eta = np.asarray(state.occupations, dtype=np.int64)
    rates = np.array([jump_rate(config.alpha, int(k)) for k in eta])
    total = rates.sum()
    if total <= 0.0:
        if eta.sum() > 0:
            raise InvariantViolation("particles present but every rate is zero")
        raise DomainError("no occupied site: nothing can jump")
    dt = rng.standard_exponential() / total
    cum = np.cumsum(rates)
    x = int(min(np.searchsorted(cum, rng.random() * total, side="right"), len(eta) - 1))
    while rates[x] == 0.0:  # guard against landing on a zero-width slot at the boundary
        x -= 1
    y = _destination(config, x, rng.random())
    new = eta.copy()
    new[x] -= 1
    new[y] += 1
    return ZrpState(new, state.time + dt, state.jump_count + 1)


class _SumTree:
    """Complete binary tree of partial sums; leaves are site rates."""

    def __init__(self, values: Sequence[float]):
        size = 1
        while size < len(values):
            size *= 2
        self.size = size
        self.tree = [0.0] * (2 * size)
        for i, v in enumerate(values):
            self.tree[size + i] = float(v)
        for i in range(size - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    @property
    def total(self) -> float:
        return self.tree[1]

    def update(self, i: int, v: float) -> None:
        t = self.tree
        i += self.size
        t[i] = v
        i //= 2
        while i:
            t[i] = t[2 * i] + t[2 * i + 1]
            i //= 2

    def find(self, u: float) -> int:
        """Leaf whose cumulative interval contains ``u`` in ``[0, total)``."""
        t = self.tree
        i = 1
        while i < self.size:
            left = t[2 * i]
            if u < left or t[2 * i + 1] == 0.0:
                i = 2 * i
            else:
                u -= left
                i = 2 * i + 1
        return i - self.size


@dataclass(frozen=True)
class RunSummary:
    final: ZrpState
    elapsed: float
    jumps: int
    hit: bool
    samples: list = field(default_factory=list)


class _Simulator:
    def __init__(self, config: ZrpConfig, occupations=None, stream: Sequence[int] = ()):
        self.config = config
        eta = initial_occupations(config) if occupations is None else np.asarray(occupations)
        self.eta = [int(v) for v in eta]
        self.g = jump_rates(config.alpha, config.n_particles).tolist()
        self.tree = _SumTree([self.g[k] for k in self.eta])
        self.rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([int(config.seed), *map(int, stream)]))
        )
        self.time = 0.0
        self.jumps = 0
        self._pos = _BLOCK

    def _refill(self):
        self._exp = self.rng.standard_exponential(_BLOCK).tolist()
        self._u1 = self.rng.random(_BLOCK).tolist()
        self._u2 = self.rng.random(_BLOCK).tolist()
        self._pos = 0

    def jump(self) -> tuple[int, int, float]:
        """Perform one jump; returns (from, to, holding time of the old state)."""
        total = self.tree.total
        if total <= 0.0:
            raise InvariantViolation("particles present but every rate is zero")
        if self._pos == _BLOCK:
            self._refill()
        p = self._pos
        self._pos += 1
        dt = self._exp[p] / total
        x = self.tree.find(self._u1[p] * total)
        y = _destination(self.config, x, self._u2[p])
        eta, g = self.eta, self.g
        eta[x] -= 1
        eta[y] += 1
        self.tree.update(x, g[eta[x]])
        self.tree.update(y, g[eta[y]])
        self.time += dt
        self.jumps += 1
        return x, y, dt

    def state(self) -> ZrpState:
        return ZrpState(np.array(self.eta, dtype=np.int64), self.time, self.jumps)


def run(
    config: ZrpConfig,
    max_time: Optional[float] = None,
    max_jumps: Optional[int] = None,
    hit: Optional[Callable[[Sequence[int]], bool]] = None,
    observe_every: Optional[int] = None,
) -> RunSummary:
    """Simulate until the first of ``max_time``, ``max_jumps`` or ``hit``.

    ``hit`` receives the occupation list after every jump (and once at the
    start). A jump that would pass ``max_time`` is not performed and the
    clock is set to ``max_time``. With ``observe_every = m`` a snapshot
    ``(jump_count, time, occupations)`` is kept every ``m`` jumps.
    """
    if max_time is None and max_jumps is None and hit is None:
        raise ConfigurationError("need at least one stopping rule")
    if observe_every is not None and observe_every < 1:
        raise ConfigurationError("observe_every must be >= 1")
    sim = _Simulator(config)
    samples = []
    if observe_every:
        samples.append((0, 0.0, tuple(sim.eta)))
    if hit is not None and hit(sim.eta):
        return RunSummary(sim.state(), 0.0, 0, True, samples)
    if config.n_particles == 0:
        t = float(max_time) if max_time is not None else 0.0
        return RunSummary(ZrpState(np.array(sim.eta, dtype=np.int64), t, 0), t, 0, False, samples)
    t_cap = math.inf if max_time is None else float(max_time)
    j_cap = math.inf if max_jumps is None else int(max_jumps)
    hit_flag = False
    while sim.jumps < j_cap:
        if sim._pos == _BLOCK:
            sim._refill()
        if sim.time + sim._exp[sim._pos] / sim.tree.total > t_cap:
            sim.time = t_cap
            break
        sim.jump()
        if observe_every and sim.jumps % observe_every == 0:
            samples.append((sim.jumps, sim.time, tuple(sim.eta)))
        if hit is not None and hit(sim.eta):
            hit_flag = True
            break
    return RunSummary(sim.state(), sim.time, sim.jumps, hit_flag, samples)


def _check_enumerable(n: int, N: int) -> None:
    if n > MAX_EXACT_SITES or N > MAX_EXACT_PARTICLES:
        raise ConfigurationError(
            f"exact law needs n_sites <= {MAX_EXACT_SITES} and n_particles <= {MAX_EXACT_PARTICLES}"
        )


def exact_law(n: int, N: int, alpha: float) -> tuple[list, np.ndarray]:
    """All compositions of ``N`` into ``n`` parts with their stationary probabilities."""
    _check_enumerable(n, N)
    states = [
        c for c in itertools.product(range(N + 1), repeat=n) if sum(c) == N
    ]
    logw = np.array([-sum(k**alpha for k in c) for c in states])
    w = np.exp(logw - logw.max())
    return states, w / w.sum()


@dataclass(frozen=True)
class StationaryReport:
    tv: float
    states: list
    exact: np.ndarray
    empirical: np.ndarray
    jumps: int
    n_samples: int


def stationary_check(config: ZrpConfig, run_length: int, thin: int = 1, burn_in: int = 0) -> StationaryReport:
    """Total-variation distance between the time-averaged law and the exact one.

    Every ``thin``-th visited state after ``burn_in`` jumps is recorded with
    weight ``1 / R(eta)``, its mean holding time. The jump chain visits
    states in proportion to ``pi(eta) R(eta)``, so the weighted average
    estimates ``pi`` itself.
    """
    n, N = config.n_sites, config.n_particles
    _check_enumerable(n, N)
    if thin < 1 or run_length < 1 or burn_in < 0:
        raise ConfigurationError("need run_length >= 1, thin >= 1 and burn_in >= 0")
    states, exact = exact_law(n, N, config.alpha)
    base = N + 1
    powers = [base**i for i in range(n)]
    index = np.full(base**n, -1, dtype=np.int64)
    for i, s in enumerate(states):
        index[sum(k * p for k, p in zip(s, powers))] = i
    acc = np.zeros(base**n)
    sim = _Simulator(config)
    code = sum(k * p for k, p in zip(sim.eta, powers))
    count = 0
    for j in range(burn_in + run_length):
        if j >= burn_in and (j - burn_in) % thin == 0:
            acc[code] += 1.0 / sim.tree.total
            count += 1
        x, y, _ = sim.jump()
        code += powers[y] - powers[x]
    emp = np.zeros(len(states))
    hit = np.flatnonzero(acc)
    if np.any(index[hit] < 0):
        raise InvariantViolation("visited a configuration with the wrong particle count")
    emp[index[hit]] = acc[hit]
    emp /= emp.sum()
    tv = 0.5 * float(np.abs(emp - exact).sum())
    return StationaryReport(tv, states, exact, emp, burn_in + run_length, count)


def detailed_balance_residual(config: ZrpConfig, checks: int = 100, seed: Optional[int] = None) -> float:
    """Largest relative defect of ``pi(eta) g(eta_x) p(x,y) = pi(eta') g(eta'_y) p(y,x)``.

    ``eta' = eta^{x,y}``; transitions with ``eta_x > 0`` are drawn at random
    and ``pi`` is the enumerated exact law.
    """
    states, probs = exact_law(config.n_sites, config.n_particles, config.alpha)
    if config.n_particles == 0:
        return 0.0
    lookup = {s: p for s, p in zip(states, probs)}
    rng = np.random.default_rng(config.seed if seed is None else seed)
    worst = 0.0
    a = config.alpha
    done = 0
    while done < checks:
        s = states[rng.integers(len(states))]
        x, y = rng.choice(config.n_sites, size=2, replace=False)
        if s[x] == 0 or transition_probability(config, x, y) == 0.0:
            continue
        t = list(s)
        t[x] -= 1
        t[y] += 1
        t = tuple(t)
        lhs = lookup[s] * jump_rate(a, s[x]) * transition_probability(config, x, y)
        rhs = lookup[t] * jump_rate(a, t[y]) * transition_probability(config, y, x)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        done += 1
    return worst


@dataclass(frozen=True)
class HittingTimes:
    """Per-replica first times at which ``max_x eta_x >= threshold``.

    Censored replicas report ``max_time`` with ``censored`` set. Descriptive
    only: no asymptotics are implied.
    """

    times: np.ndarray
    censored: np.ndarray
    theta: float
    threshold: float
    seed: int

    @property
    def median(self) -> float:
        return float(np.median(self.times))

    @property
    def mean(self) -> float:
        return float(np.mean(self.times))

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))


def _hitting_time(config: ZrpConfig, replica: int, threshold: float, max_time: float) -> tuple[float, bool]:
    sim = _Simulator(config, stream=(replica,))
    if max(sim.eta) >= threshold:
        return 0.0, False
    while True:
        if sim._pos == _BLOCK:
            sim._refill()
        if sim.time + sim._exp[sim._pos] / sim.tree.total > max_time:
            return float(max_time), True
        _, y, _ = sim.jump()
        if sim.eta[y] >= threshold:
            return sim.time, False


def condensation_time(
    config: ZrpConfig, theta: float, replicas: int, max_time: float, threads: int = 1
) -> HittingTimes:
    """Hitting times of ``max eta >= theta (N - mu n)`` from the uniform spread.

    Replica ``r`` uses the stream ``(seed, r)``, so samples with the same seed
    are identical regardless of ``threads``.
    """
    if not 0.0 < theta < 1.0:
        raise DomainError("theta must lie in (0, 1)")
    if replicas < 1 or max_time <= 0:
        raise ConfigurationError("need replicas >= 1 and max_time > 0")
    if config.initial != "uniform_spread":
        raise ConfigurationError("condensation runs start from the uniform spread")
    mu = derive_params(config.alpha).mu
    excess = config.n_particles - mu * config.n_sites
    if excess <= 0:
        raise DomainError("need a positive excess N - mu n")
    threshold = theta * excess

    def one(r):
        return _hitting_time(config, r, threshold, max_time)

    if threads <= 1:
        out = [one(r) for r in range(replicas)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, range(replicas)))
    times = np.array([o[0] for o in out])
    cens = np.array([o[1] for o in out])
    return HittingTimes(times, cens, float(theta), float(threshold), int(config.seed))
