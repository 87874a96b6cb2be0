"""Boltzmann model: tilted component law, the Poisson-cycle construction and
the Monte-Carlo coefficient estimator.

A draw of the construction picks, for every cycle length j, a Poisson number
P_j of components with mean C(x0^j) y0^j / j, each of size distributed as
c_k x0^{jk} / C(x0^j); it returns size = sum_j j sum_i C_{j,i} and
count = sum_j j P_j.  Sampling is chunked with one seed-derived stream per
chunk, so streams do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError
from .model import ExpansiveSpec
from .saddle import FALLING, SeriesEvaluator, evaluator, solve_bivariate, solve_univariate
from .asym import G_ge2

DEFAULT_EPS = 1e-12
COMPONENT_TAIL = 1e-15
CHUNK = 1 << 16


@dataclass(frozen=True)
class RngState:
    seed: int
    algorithm: str = "PCG64"
    chunk_size: int = CHUNK

    def generator(self, chunk: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(chunk,))
        return np.random.Generator(getattr(np.random, self.algorithm)(ss))


# --------------------------------------------------------------------------
# Tilted component law


class ComponentLaw:
    """Pr[k] = c_k x^k / C(x) for k >= m, for one x in (0, rho)."""

    def __init__(self, spec: ExpansiveSpec, log_x: float, tail: float = COMPONENT_TAIL):
        self.spec = spec
        self.chi = math.log(spec.r) - log_x
        if not self.chi > 0:
            raise DomainError("the tilting point must lie in (0, rho)")
        ev: SeriesEvaluator = evaluator(spec)
        (self.log_C,), (rel,), terms = ev.log_sums(self.chi, [()], rtol=tail)
        m = spec.m
        self.K = m + terms - 1
        k = np.arange(m, self.K + 1)
        logp = ev.logw[m: self.K + 1] - self.chi * k - self.log_C
        self.support = k
        self.pmf = np.exp(logp)
        self.cdf = np.cumsum(self.pmf)
        self.tail_mass = rel
        self._ratio = ev._ratio_bound(self.chi, self.K, ())

    def log_pmf(self, k: int) -> float:
        if k < self.spec.m:
            return -math.inf
        return (math.log(self.spec.h(k)) + (self.spec.a - 1) * math.log(k)
                - self.chi * k - self.log_C)

    def mean(self) -> float:
        (l1,), _, _ = evaluator(self.spec).log_sums(self.chi, [FALLING[1]])
        return math.exp(l1 - self.log_C)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if size == 0:
            return np.zeros(0, dtype=np.int64)
        u = rng.random(size)
        idx = np.searchsorted(self.cdf, u, side="right")
        out = np.empty(size, dtype=np.int64)
        inside = idx < len(self.support)
        out[inside] = self.support[idx[inside]]
        for i in np.flatnonzero(~inside):
            out[i] = self._sample_tail(rng)
        return out

    def _sample_tail(self, rng: np.random.Generator) -> int:
        """Exact draw conditioned on k > K: geometric envelope with ratio R, then accept/reject."""
        R = self._ratio
        K = self.K
        log_first = self.log_pmf(K + 1)
        while True:
            k = K + int(rng.geometric(1 - R))
            log_env = log_first + (k - K - 1) * math.log(R)
            if math.log(rng.random()) <= self.log_pmf(k) - log_env:
                return k


def sample_gamma_C(spec: ExpansiveSpec, x0: float, rng: np.random.Generator, size: int | None = None):
    """Draw(s) from the tilted law c_k x0^k / C(x0)."""
    if not 0 < x0 < spec.r:
        raise DomainError("x0 must lie in (0, rho)")
    law = ComponentLaw(spec, math.log(x0))
    if size is None:
        return int(law.sample(1, rng)[0])
    return law.sample(size, rng)


# --------------------------------------------------------------------------
# Parameters of the Poisson-cycle construction


@dataclass(frozen=True)
class BoltzmannParams:
    x0: float
    y0: float
    j_max: int
    lambda_j: np.ndarray = field(repr=False)
    tail_mass: float
    log_G: float
    saddle: object = None

    def law(self, spec: ExpansiveSpec, j: int) -> ComponentLaw:
        return _law_cache(spec, self.x0, j)


_LAWS: dict = {}


def _law_cache(spec, x0, j) -> ComponentLaw:
    key = (spec, x0, j)
    if key not in _LAWS:
        if len(_LAWS) > 4096:
            _LAWS.clear()
        _LAWS[key] = ComponentLaw(spec, j * math.log(x0))
    return _LAWS[key]


def _log_C_pow(spec: ExpansiveSpec, x0: float, j: int, poly=()) -> float:
    chi = math.log(spec.r) - j * math.log(x0)
    (ls,), _, _ = evaluator(spec).log_sums(chi, [poly])
    return ls


def G_eval(spec: ExpansiveSpec, x0: float, y0: float, tol: float = 1e-15):
    """log G(x0, y0) = y0 C(x0) + log G^{>=2}(x0, y0), with the tail bound of the second part."""
    if not 0 < x0 < spec.r:
        raise DomainError("x0 must lie in (0, rho)")
    if y0 < 0:
        raise DomainError("y0 must be non-negative")
    if y0 == 0:
        return 0.0, 0.0
    g2 = G_ge2(spec, x0, y0, tol)
    return y0 * math.exp(_log_C_pow(spec, x0, 1)) + g2.log_value, g2.tail_bound / g2.value


def params_at(spec: ExpansiveSpec, x0: float, y0: float, eps: float = DEFAULT_EPS, saddle=None) -> BoltzmannParams:
    """Poisson means lambda_j = C(x0^j) y0^j / j up to a j_max with certified tail <= eps."""
    if not 0 < x0 < spec.r:
        raise DomainError("x0 must lie in (0, rho)")
    if y0 < 0:
        raise DomainError("y0 must be non-negative")
    m = spec.m
    if y0 == 0:
        return BoltzmannParams(x0, 0.0, 0, np.zeros(0), 0.0, 0.0, saddle)
    q = x0**m * y0
    if q >= 1:
        raise DomainError(f"x0^m y0 = {q!r} >= 1: the construction has infinite mean")
    # small-z bound C(z) <= c_m z^m (1 + A z) for z <= x0^2
    z0 = x0 * x0
    A = math.exp(_log_C_pow(spec, x0, 2) - (m + 1) * math.log(z0)) / spec.c_m
    lam = []
    j = 1
    while True:
        lam.append(math.exp(_log_C_pow(spec, x0, j) + j * math.log(y0)) / j)
        J = j + 1
        tail = spec.c_m * (1 + A * x0**J) * q**J / (J * (1 - q))
        if tail <= eps:
            break
        j += 1
    lam = np.array(lam)
    log_G = float(math.fsum(lam))
    return BoltzmannParams(x0, y0, len(lam), lam, tail, log_G, saddle)


def tune(spec: ExpansiveSpec, n: int, N: int | None = None, eps: float = DEFAULT_EPS) -> BoltzmannParams:
    """Parameters at the saddle point of (n, N), or at (z_n, 1) when N is None."""
    if N is None:
        z = solve_univariate(spec, n)
        return params_at(spec, z, 1.0, eps)
    sol = solve_bivariate(spec, n, N)
    return params_at(spec, sol.x_n, sol.y_n, eps, saddle=sol)


def expected_size_count(spec: ExpansiveSpec, params: BoltzmannParams) -> tuple[float, float]:
    """sum_j x0^j y0^j C'(x0^j) and sum_j y0^j C(x0^j) over j <= j_max."""
    size, count = [], []
    for j in range(1, params.j_max + 1):
        lyj = j * math.log(params.y0)
        size.append(math.exp(_log_C_pow(spec, params.x0, j, FALLING[1]) + lyj))
        count.append(math.exp(_log_C_pow(spec, params.x0, j) + lyj))
    return math.fsum(size), math.fsum(count)


# --------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class SampleOutcome:
    size: int
    count: int
    per_j: dict

    def __post_init__(self):
        if self.count != sum(j * len(c) for j, (p, c) in self.per_j.items()):
            raise AssertionError("count must equal sum_j j P_j")


def sample_lambda(params: BoltzmannParams, spec: ExpansiveSpec, rng: np.random.Generator) -> SampleOutcome:
    """One draw, keeping every cycle length with P_j > 0 and its component sizes."""
    per_j, size, count = {}, 0, 0
    for j in range(1, params.j_max + 1):
        p = int(rng.poisson(params.lambda_j[j - 1]))
        if p == 0:
            continue
        comps = params.law(spec, j).sample(p, rng)
        per_j[j] = (p, [int(c) for c in comps])
        size += j * int(comps.sum())
        count += j * p
    if size < spec.m * count:
        raise AssertionError("size >= m * count violated")
    return SampleOutcome(size, count, per_j)


def _sample_chunk(params: BoltzmannParams, spec: ExpansiveSpec, B: int, rng: np.random.Generator):
    sizes = np.zeros(B, dtype=np.int64)
    counts = np.zeros(B, dtype=np.int64)
    for j in range(1, params.j_max + 1):
        P = rng.poisson(params.lambda_j[j - 1], B)
        total = int(P.sum())
        if total == 0:
            continue
        comps = params.law(spec, j).sample(total, rng)
        owner = np.repeat(np.arange(B), P)
        sizes += j * np.bincount(owner, weights=comps, minlength=B).astype(np.int64)
        counts += j * P
    return sizes, counts


def sample_many(params: BoltzmannParams, spec: ExpansiveSpec, draws: int, rng_state: RngState,
                threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(sizes, counts) of ``draws`` independent draws; identical for any thread count."""
    B = rng_state.chunk_size
    chunks = [(i, min(B, draws - i * B)) for i in range((draws + B - 1) // B)]

    def run(chunk):
        i, b = chunk
        return _sample_chunk(params, spec, b, rng_state.generator(i))

    for j in range(1, params.j_max + 1):
        params.law(spec, j)  # build the tables before workers share them
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    sizes = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    if np.any(sizes < spec.m * counts):
        raise AssertionError("size >= m * count violated")
    return sizes, counts


# --------------------------------------------------------------------------
# Exact law and the coefficient estimator


def exact_joint_law(spec: ExpansiveSpec, x0: float, y0: float, n_max: int, N_max: int) -> np.ndarray:
    """Pr[size = n, count = N] = g_{n,N} x0^n y0^N / G(x0, y0) on the truncated support."""
    from .series import build_C, mset_exp_transform

    table = mset_exp_transform(build_C(spec, n_max, mode="auto"), n_max, N_max)
    log_G, _ = G_eval(spec, x0, y0)
    out = np.zeros((n_max + 1, N_max + 1))
    for n in range(n_max + 1):
        for N in range(N_max + 1):
            lg = table.log_value(n, N)
            if math.isfinite(lg):
                out[n, N] = math.exp(lg + n * math.log(x0) + (N * math.log(y0) if N else 0.0) - log_G)
    return out


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    cells: int
    draws: int


def chi_square_test(sizes: np.ndarray, counts: np.ndarray, law: np.ndarray, min_expected: float = 5.0):
    """Goodness of fit of (size, count) pairs against a truncated exact law.

    Cells with expected count below ``min_expected`` are pooled together with
    everything outside the table.
    """
    draws = len(sizes)
    n_max, N_max = law.shape[0] - 1, law.shape[1] - 1
    inside = (sizes <= n_max) & (counts <= N_max)
    obs_table = np.zeros_like(law)
    np.add.at(obs_table, (sizes[inside], counts[inside]), 1)
    expected = law * draws
    keep = expected >= min_expected
    obs = list(obs_table[keep])
    exp = list(expected[keep])
    obs.append(draws - sum(obs))
    exp.append(draws - sum(exp))
    obs, exp = np.array(obs), np.array(exp)
    if exp[-1] < min_expected:
        obs, exp = obs[:-1], exp[:-1]
        exp = exp * obs.sum() / exp.sum()
    stat, p = stats.chisquare(obs, exp)
    return ChiSquareResult(float(stat), float(p), len(obs), draws)


@dataclass(frozen=True)
class EstimateResult:
    n: int
    N: int
    log_estimate: float
    se_log: float
    hits: int
    trials: int
    seed: int

    @property
    def value(self) -> float:
        return math.exp(self.log_estimate)

    @property
    def se(self) -> float:
        return self.value * self.se_log

    def record(self) -> dict:
        return {"n": self.n, "N": self.N, "log_estimate": self.log_estimate, "se": self.se_log,
                "trials": self.trials, "seed": self.seed}


def coefficient_from_probability(params: BoltzmannParams, n: int, N: int, log_prob: float) -> float:
    """log g_{n,N} = -n log x0 - N log y0 + log G(x0, y0) + log Pr[size = n, count = N]."""
    return -n * math.log(params.x0) - N * math.log(params.y0) + params.log_G + log_prob


def estimate_gnN(spec: ExpansiveSpec, n: int, N: int, trials: int, seed: int = 0, threads: int = 1,
                 params: BoltzmannParams | None = None) -> EstimateResult:
    """Hit-frequency estimate of g_{n,N}; SE of the log estimate by the delta method."""
    params = params or tune(spec, n, N)
    sizes, counts = sample_many(params, spec, trials, RngState(seed), threads)
    hits = int(np.count_nonzero((sizes == n) & (counts == N)))
    if hits == 0:
        return EstimateResult(n, N, -math.inf, math.inf, 0, trials, seed)
    p = hits / trials
    log_est = coefficient_from_probability(params, n, N, math.log(p))
    return EstimateResult(n, N, log_est, math.sqrt((1 - p) / (trials * p)), hits, trials, seed)
