"""Real evaluation of C and its derivatives, and the saddle-point solvers.

Points are parametrized by ``chi = ln(rho / x) > 0``.  Every sum is of the form
``sum_j p(j) w_j exp(-chi j)`` with ``w_j = c_j rho^j`` and ``p`` a product of
linear factors, evaluated in float64 after shifting by the largest log-term,
so neither ``c_j`` nor ``x^-n`` ever has to be formed.  Truncation is certified
with a ratio bound on consecutive terms beyond the cutoff.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import mpmath
import numpy as np

from .bracket import bisect_increasing, expand_bracket
from .errors import DomainError, PrecisionError
from .model import ExpansiveSpec, coeff_c, weights

MAX_TERMS = 2 * 10**7
DEFAULT_ROOT_TOL = 1e-12
DEFAULT_SERIES_TOL = 1e-15
WINDOW_LOW, WINDOW_HIGH = 0.95, 1.05
EPS = 2.0**-52

# polynomial weights as tuples of roots: j, j(j-1), j(j-1)(j-2)
FALLING = {0: (), 1: (0,), 2: (0, 1), 3: (0, 1, 2)}


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    terms_used: int
    log_value: float = math.nan


class SeriesEvaluator:
    """Sums ``sum_{j>=start} p(j) w_j e^{-chi j}`` for one model, with cached weights."""

    def __init__(self, spec: ExpansiveSpec, size: int = 4096):
        self.spec = spec
        self.size = 0
        self._grow(size)

    def _grow(self, size: int):
        if size > MAX_TERMS:
            raise PrecisionError(f"series needs more than {MAX_TERMS} terms to certify its tail")
        self.j = np.arange(size, dtype=float)
        with np.errstate(divide="ignore"):
            self.logw = np.log(weights(self.spec, size - 1))
        self.size = size

    def _initial_cutoff(self, chi: float, start: int, degree: int) -> int:
        p = self.spec.a + degree + 1.0
        extra = (40.0 + p * max(0.0, math.log(p / chi))) / chi
        return start + 8 + int(math.ceil(min(extra, 4.0 * MAX_TERMS)))

    def _ratio_bound(self, chi: float, last: int, roots) -> float:
        """sup over j >= last of t_{j+1}/t_j."""
        a = self.spec.a
        r = math.exp(-chi) * self.spec.h.ratio_bound(last)
        if a > 1:
            r *= ((last + 1) / last) ** (a - 1)
        for z in roots:
            r *= (last + 1 - z) / (last - z)
        return r

    def log_sums(self, chi: float, polys, start: int | None = None, rtol: float = DEFAULT_SERIES_TOL):
        """Return ``(log_sums, rel_tails, terms)`` for each root tuple in ``polys``."""
        if not chi > 0:
            raise DomainError(f"evaluation point must lie inside the disc (chi={chi!r})")
        spec = self.spec
        start = spec.m if start is None else max(start, spec.m)
        degree = max(len(p) for p in polys)
        J = self._initial_cutoff(chi, start, degree)
        while True:
            if J > self.size:
                self._grow(max(J, 2 * self.size))
            jj = self.j[start:J]
            lt = self.logw[start:J] - chi * jj
            shift = float(lt.max())
            v = np.exp(lt - shift)
            logs, tails, ok = [], [], True
            for roots in polys:
                p = np.ones_like(jj)
                for z in roots:
                    p = p * (jj - z)
                terms = p * v
                total = float(terms.sum())
                R = self._ratio_bound(chi, J - 1, roots) if J - 1 > max(roots, default=0) else math.inf
                if total <= 0 or R >= 1:
                    ok = False
                    break
                rel = float(terms[-1]) * R / (1 - R) / total
                if rel > rtol:
                    ok = False
                    break
                logs.append(shift + math.log(total))
                tails.append(rel)
            if ok:
                return logs, tails, J - start
            J *= 2


@functools.lru_cache(maxsize=64)
def evaluator(spec: ExpansiveSpec) -> SeriesEvaluator:
    return SeriesEvaluator(spec)


def _chi_of(spec: ExpansiveSpec, x: float) -> float:
    if not 0 < x < spec.r:
        raise DomainError(f"x={x!r} must lie in (0, rho={spec.r!r}); the series diverges otherwise")
    return math.log(spec.r / x)


def eval_C_deriv(spec: ExpansiveSpec, x: float, k: int = 0, tol: float = DEFAULT_SERIES_TOL,
                 precision: int | None = None) -> SeriesValue:
    """C^(k)(x) for k in 0..3 with a certified relative truncation bound."""
    if k not in FALLING:
        raise DomainError("derivative order must be 0, 1, 2 or 3")
    if precision is not None and precision > 53:
        return _eval_C_deriv_mp(spec, x, k, tol, precision)
    chi = _chi_of(spec, x)
    logs, tails, used = evaluator(spec).log_sums(chi, [FALLING[k]], rtol=tol)
    log_val = logs[0] - k * math.log(x)
    val = math.exp(log_val) if log_val < 709 else math.inf
    return SeriesValue(val, tails[0] * val, used, log_val)


def _eval_C_deriv_mp(spec, x, k, tol, precision) -> SeriesValue:
    """Term-by-term mpmath summation (independent of the float64 path)."""
    _chi_of(spec, float(x))
    roots = FALLING[k]
    with mpmath.workprec(precision):
        x = mpmath.mpf(x)
        total = mpmath.mpf(0)
        j = spec.m
        ev = evaluator(spec)
        chi = float(mpmath.log(mpmath.mpf(spec.rho.numerator) / spec.rho.denominator / x))
        while True:
            if j - k >= 0:
                ff = math.prod(j - z for z in roots)
                term = ff * coeff_c(spec, j, "mp") * x ** (j - k)
                total += term
            if j > spec.m + k + 1 and j > 1:
                R = ev._ratio_bound(chi, j, roots)
                if R < 1:
                    tail = term * R / (1 - R)
                    if tail <= tol * total:
                        return SeriesValue(float(total), float(tail), j - spec.m + 1, float(mpmath.log(total)))
            j += 1
            if j > MAX_TERMS:
                raise PrecisionError("mp series did not certify its tail")


# --------------------------------------------------------------------------
# Univariate saddle point


def _chi_guess(spec: ExpansiveSpec, target: float, order: int) -> float:
    """Leading-order solution of Gamma(a+order) h(1/chi) chi^(-a-order) = target."""
    a = spec.a
    chi = 1.0
    for _ in range(3):  # fixed-point passes for the slowly varying factor
        chi = (math.gamma(a + order) * spec.h(1 / chi) / max(target, 1e-300)) ** (1.0 / (a + order))
    return chi


def solve_univariate(spec: ExpansiveSpec, n: float, tol: float = DEFAULT_ROOT_TOL) -> float:
    """z_n in (0, rho) with z_n C'(z_n) = n, by bisection in log(chi)."""
    if n <= 0:
        raise DomainError("n must be positive")
    ev = evaluator(spec)
    log_n = math.log(n)

    def resid(t):
        return log_n - ev.log_sums(math.exp(t), [FALLING[1]])[0][0]  # increasing in t

    t0 = math.log(min(_chi_guess(spec, n, 1), 50.0))
    lo, hi, f_lo, f_hi = expand_bracket(resid, t0, 0.5, t_min=math.log(1e-9), t_max=math.log(700.0), max_step=1.0)
    res = bisect_increasing(resid, lo, hi, f_lo=f_lo, f_hi=f_hi, ftol=0.25 * tol, xtol=1e-16)
    chi = math.exp(res.root)
    z = spec.r * math.exp(-chi)
    m1 = math.exp(ev.log_sums(chi, [FALLING[1]])[0][0])
    if abs(m1 - n) > tol * n:
        raise PrecisionError(f"univariate residual {abs(m1 - n) / n:.3g} exceeds tol={tol}")
    return z


def solve_univariate_poly(coeffs, n: float, tol: float = DEFAULT_ROOT_TOL) -> float:
    """z > 0 with z C'(z) = n for a polynomial C given by raw coefficients."""
    coeffs = [float(c) for c in coeffs]
    if coeffs[0] != 0 or any(c < 0 for c in coeffs) or not any(coeffs):
        raise DomainError("polynomial must have zero constant term and nonnegative coefficients")

    def resid(t):
        z = math.exp(t)
        return math.fsum(k * c * z**k for k, c in enumerate(coeffs)) - n

    lo, hi, f_lo, f_hi = expand_bracket(resid, 0.0, 1.0, t_min=-700.0, t_max=700.0)
    res = bisect_increasing(resid, lo, hi, f_lo=f_lo, f_hi=f_hi, ftol=tol * n, xtol=1e-16)
    return math.exp(res.root)


# --------------------------------------------------------------------------
# Threshold N*


@dataclass(frozen=True)
class NStarSolution:
    v: float
    u_v: float
    g_v: float
    N_star: float
    C0: float


def nstar_constant(spec: ExpansiveSpec) -> float:
    a = spec.a
    return (spec.r ** (-spec.m) * math.gamma(a + 1)) ** (1 / (a + 1)) / a


def solve_Nstar(spec: ExpansiveSpec, v: float, tol: float = DEFAULT_ROOT_TOL) -> NStarSolution:
    """Solve u h(u)^(1/(a+1)) = v^(1/(a+1)) and form N* = C0 g(v) v^(a/(a+1))."""
    if v < 1:
        raise DomainError("v must be at least 1")
    a = spec.a
    p = 1.0 / (a + 1)
    log_v = math.log(v)

    def phi(s):
        return s + p * math.log(spec.h(math.exp(s))) - p * log_v

    eps = 0.5 * p
    lo, hi = max((p - eps) * log_v, 0.0), min((p + eps) * log_v, log_v)
    f_lo, f_hi = phi(lo), phi(hi)
    if not (f_lo <= 0 <= f_hi):
        lo, hi = 0.0, log_v
        f_lo, f_hi = phi(lo), phi(hi)
    if abs(f_lo) <= tol and f_lo <= 0 and not f_hi <= 0:
        s = lo
    else:
        res = bisect_increasing(phi, lo, hi, f_lo=f_lo, f_hi=f_hi, ftol=0.5 * tol, xtol=1e-16)
        s = res.root
    u = math.exp(s)
    g = spec.h(u) ** p
    C0 = nstar_constant(spec)
    return NStarSolution(v, u, g, C0 * g * v ** (a * p), C0)


def nstar_residual(spec: ExpansiveSpec, sol: NStarSolution) -> float:
    """Relative residual of u h(u)^(1/(a+1)) = v^(1/(a+1))."""
    p = 1.0 / (spec.a + 1)
    return sol.u_v * spec.h(sol.u_v) ** p / sol.v**p - 1.0


def compute_a_n(spec: ExpansiveSpec, n: int, N: int, nstar_n: NStarSolution | None = None,
                nstar_rest: NStarSolution | None = None) -> float:
    """a_n = lambda^-1 g(n-mN)/g(n) ((n-mN)/n)^(a/(a+1))."""
    rest = n - spec.m * N
    if rest < 1:
        raise DomainError(f"n - mN = {rest} must be at least 1")
    nstar_n = nstar_n or solve_Nstar(spec, n)
    nstar_rest = nstar_rest or solve_Nstar(spec, rest)
    lam = N / nstar_n.N_star
    a = spec.a
    return (1 / lam) * nstar_rest.g_v / nstar_n.g_v * (rest / n) ** (a / (a + 1))


def classify(lam: float) -> str:
    if lam < WINDOW_LOW:
        return "CaseI"
    if lam > WINDOW_HIGH:
        return "CaseII"
    return "Window"


# --------------------------------------------------------------------------
# Bivariate saddle point


@dataclass(frozen=True)
class SaddleSolution:
    n: int
    N: int
    x_n: float
    y_n: float
    chi_n: float
    S_n: float
    residual_size: float
    residual_count: float
    regime: str
    lam: float
    n_star: float
    C: float
    xC1: float
    x2C2: float
    chi_b: float

    @property
    def xmy(self) -> float:
        return self.S_n / (1 + self.S_n)

    def record(self) -> dict:
        keys = ("n", "N", "x_n", "y_n", "chi_n", "S_n", "residual_size", "residual_count", "regime", "lam")
        d = asdict(self)
        return {k: d[k] for k in keys}


class _Reduction:
    """a(x), b(x) and f(x) of the one-variable reduction, as functions of t = log(chi)."""

    def __init__(self, spec: ExpansiveSpec, n: int, N: int):
        self.spec, self.n, self.N = spec, n, N
        self.rest = n - spec.m * N
        self.log_rest = math.log(self.rest)
        self.c_m = spec.c_m
        self.ev = evaluator(spec)
        self.polys = [(), (spec.m,)]

    def logs(self, t):
        chi = math.exp(t)
        (lm0, ld), _, _ = self.ev.log_sums(chi, self.polys)
        return chi, lm0, ld

    def log_b(self, t):
        chi, lm0, ld = self.logs(t)
        log_x = math.log(self.spec.r) - chi
        return self.spec.m * log_x + self.log_rest - ld

    def f(self, t):
        chi, lm0, ld = self.logs(t)
        log_x = math.log(self.spec.r) - chi
        lb = self.spec.m * log_x + self.log_rest - ld
        if lb >= 0:
            return math.inf
        a = math.exp(self.log_rest + lm0 - ld)
        b = math.exp(lb)
        return a + self.c_m * b / (1 - b)


def solve_bivariate(spec: ExpansiveSpec, n: int, N: int, tol: float = DEFAULT_ROOT_TOL) -> SaddleSolution:
    """Solve the size/count saddle system via the monotone one-variable reduction."""
    n, N = int(n), int(N)
    if n < 1 or N < 1:
        raise DomainError("n and N must be positive")
    if n - spec.m * N < 1:
        raise DomainError(f"n - mN = {n - spec.m * N} < 1: no admissible saddle point")
    red = _Reduction(spec, n, N)
    t_min, t_max = math.log(1e-9), math.log(700.0)
    # b is increasing in t: locate the point where b = 1
    t0 = math.log(min(_chi_guess(spec, n, 1), 50.0))
    lo, hi, f_lo, f_hi = expand_bracket(red.log_b, t0, 0.5, t_min=t_min, t_max=t_max, max_step=1.0)
    inner = bisect_increasing(red.log_b, lo, hi, f_lo=f_lo, f_hi=f_hi, xtol=1e-15)
    t_b = inner.hi

    # f - N is increasing in t on (t_min, t_b); f = inf once b >= 1
    def resid(t):
        return red.f(t) - N

    lo, f_lo = inner.lo, resid(inner.lo)
    d = 0.5
    while f_lo > 0:
        lo -= d
        d *= 2
        if lo < t_min:
            raise DomainError(f"count equation has no root: f - N = {f_lo!r} > 0 down to chi=1e-9")
        f_lo = resid(lo)
    outer = bisect_increasing(resid, lo, t_b, f_lo=f_lo, f_hi=math.inf, ftol=0.25 * tol * N, xtol=1e-16)
    return _finish(spec, n, N, outer.root, t_b, tol)


def _finish(spec, n, N, t, t_b, tol) -> SaddleSolution:
    chi = math.exp(t)
    m = spec.m
    (lm0, lm1, lm2, ld), _, _ = evaluator(spec).log_sums(chi, [(), FALLING[1], FALLING[2], (m,)])
    log_x = math.log(spec.r) - chi
    rest = n - m * N
    log_y = math.log(rest) - ld
    b = math.exp(m * log_x + log_y)
    S = b / (1 - b)
    C, xC1, x2C2 = math.exp(lm0), math.exp(lm1), math.exp(lm2)
    y = math.exp(log_y)
    c_m = spec.c_m
    res_size = y * xC1 + m * c_m * S - n
    res_count = y * C + c_m * S - N
    # S = b/(1-b) amplifies a relative rounding error in b by (1+S): this is
    # the attainable floor in double precision, reported rather than hidden.
    floor = 64 * EPS * (1 + c_m * S * (1 + S) / N)
    tol = max(tol, floor)
    if abs(res_size) > tol * n or abs(res_count) > tol * N:
        raise PrecisionError(
            f"saddle residuals {res_size / n:.3g}, {res_count / N:.3g} exceed tol={tol} at n={n}, N={N}")
    ns = solve_Nstar(spec, n)
    lam = N / ns.N_star
    return SaddleSolution(n, N, math.exp(log_x), y, chi, S, res_size, res_count, classify(lam), lam,
                          ns.N_star, C, xC1, x2C2, math.exp(t_b))


# --------------------------------------------------------------------------
# Asymptotic diagnostics


def y_prediction(spec: ExpansiveSpec, sol: SaddleSolution) -> float:
    """rho^-m h(n/N*) / h(n/N) lambda^(a+1), the small-lambda behaviour of y_n."""
    h = spec.h
    return spec.r ** (-spec.m) * h(sol.n / sol.n_star) / h(sol.n / sol.N) * sol.lam ** (spec.a + 1)


def chi_asymptotic_check(spec: ExpansiveSpec, sol: SaddleSolution) -> dict:
    """Ratios that tend to 1 along n-grids: size share, chi prediction, S_n prediction."""
    rest = sol.n - spec.m * sol.N
    out = {
        "n": sol.n, "N": sol.N, "regime": sol.regime, "lam": sol.lam,
        "size_ratio": sol.y_n * sol.xC1 / rest,
        "S_over_N": sol.S_n / sol.N,
        "y_rho_m": sol.y_n * spec.r**spec.m,
    }
    out["chi_pred_I"] = spec.a * sol.N / sol.n
    out["chi_ratio_I"] = sol.chi_n / out["chi_pred_I"]
    try:
        a_n = compute_a_n(spec, sol.n, sol.N)
    except DomainError:
        a_n = math.nan
    out["a_n"] = a_n
    out["chi_pred_II"] = spec.a * a_n * sol.N / rest
    out["chi_ratio_II"] = sol.chi_n / out["chi_pred_II"]
    out["S_ratio_II"] = sol.S_n * spec.c_m / ((1 - a_n) * sol.N) if a_n < 1 else math.nan
    out["chi_ratio"] = out["chi_ratio_II"] if sol.regime == "CaseII" else out["chi_ratio_I"]
    return out
