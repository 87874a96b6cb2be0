"""Asymptotic counting formulas for g_n and g_{n,N}, evaluated in log space.

Constants G^{>=2}(rho, y) and G^{>=2}_{>m}(rho) are j-sums whose tails are
bounded with the small-z estimate C(z) <= c_m z^m (1 + A z), valid for
z <= z0 with A = C(z0) z0^(-m-1) / c_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, PrecisionError
from .model import ExpansiveSpec
from .saddle import (FALLING, SaddleSolution, SeriesValue, compute_a_n, evaluator, solve_bivariate,
                     solve_Nstar, solve_univariate)
from .series import build_C, build_C_gtm, log_gn, log_gnN, series_exp, series_pow

FORMULAS = ("G_n_LLT", "LLT_I", "Explicit_I", "Comb_I", "LLT_II", "Comb_II", "LLT_II_printed")
CASE_I_FORMS = ("LLT_I", "Explicit_I", "Comb_I")
CASE_II_FORMS = ("LLT_II", "Comb_II")
# LLT_II without the ((1-a_n)N)^(c_m-1)/Gamma(c_m) factor; equal to LLT_II iff c_m = 1
EXTRA_FORMS = ("LLT_II_printed",)
CONSTANT_TOL = 1e-15
MAX_J = 100000


@dataclass(frozen=True)
class AsymptoticEstimate:
    formula: str
    n: int
    N: int | None
    log_value: float
    sign: int = 1
    regime: str | None = None
    lam: float | None = None
    inputs: dict = field(default_factory=dict)
    constant_tails: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"formula": self.formula, "n": self.n, "N": self.N, "log_value": self.log_value,
                "regime": self.regime, "lam": self.lam}


# --------------------------------------------------------------------------
# Constants


def _log_C_at_power(spec: ExpansiveSpec, log_x: float, j: int, start: int | None = None) -> float:
    """log of sum_{k>=start} c_k (x^j)^k."""
    chi = math.log(spec.r) - j * log_x
    (ls,), _, _ = evaluator(spec).log_sums(chi, [()], start=start)
    # log_sums returns log sum w_k e^{-chi k} with w_k = c_k rho^k and x^j = rho e^{-chi}
    return ls


def G_ge2(spec: ExpansiveSpec, x: float, y: float, tol: float = CONSTANT_TOL) -> SeriesValue:
    """exp(sum_{j>=2} C(x^j) y^j / j) for 0 < x <= rho, x^m y < 1."""
    if y < 0:
        raise DomainError("y must be non-negative")
    if not 0 < x <= spec.r:
        raise DomainError(f"x={x!r} must lie in (0, rho]")
    if y == 0:
        return SeriesValue(1.0, 0.0, 0, 0.0)
    m = spec.m
    q = x**m * y
    if q >= 1:
        raise DomainError(f"x^m y = {q!r} >= 1: the j-sum diverges")
    log_x, log_y = math.log(x), math.log(y)
    z0 = x * x
    A = math.exp(_log_C_at_power(spec, log_x, 2) - (m + 1) * math.log(z0)) / spec.c_m
    terms = []
    j = 2
    while True:
        terms.append(math.exp(_log_C_at_power(spec, log_x, j) + j * log_y) / j)
        J = j + 1
        tail = spec.c_m * (1 + A * x**J) * q**J / (J * (1 - q))
        total = math.fsum(terms)
        if tail <= tol * max(total, 1.0):
            break
        j += 1
        if j > MAX_J:
            raise PrecisionError("G^{>=2} tail did not certify")
    return SeriesValue(math.exp(total), tail * math.exp(total), len(terms), total)


def G_ge2_gtm(spec: ExpansiveSpec, tol: float = CONSTANT_TOL) -> SeriesValue:
    """exp(sum_{j>=2} C_{>m}(rho^j) / j) with C_{>m}(z) = (C(z) - c_m z^m) / z^m."""
    m = spec.m
    log_r = math.log(spec.r)
    # C_{>m}(z)/z is increasing, so C_{>m}(rho^j) <= rho^j K with K = C_{>m}(rho^2)/rho^2
    K = math.exp(_log_C_at_power(spec, log_r, 2, start=m + 1) - 2 * m * log_r - 2 * log_r)
    terms = []
    j = 2
    while True:
        terms.append(math.exp(_log_C_at_power(spec, log_r, j, start=m + 1) - j * m * log_r) / j)
        J = j + 1
        tail = K * spec.r**J / (J * (1 - spec.r))
        total = math.fsum(terms)
        if tail <= tol * max(total, 1.0):
            break
        j += 1
        if j > MAX_J:
            raise PrecisionError("G^{>=2}_{>m} tail did not certify")
    return SeriesValue(math.exp(total), tail * math.exp(total), len(terms), total)


def G_ge2_gtm_poly(coeffs, rho: float, tol: float = CONSTANT_TOL) -> SeriesValue:
    """The same constant for a finite coefficient list (index = size), evaluated directly."""
    coeffs = [float(c) for c in coeffs]
    m = next((k for k, c in enumerate(coeffs) if c != 0), None)
    if m is None or m == 0:
        raise DomainError("need a zero constant term and at least one nonzero coefficient")
    higher = [(k, c) for k, c in enumerate(coeffs) if k > m and c != 0]
    if not higher:
        return SeriesValue(1.0, 0.0, 0, 0.0)
    K = sum(abs(c) for _, c in higher)
    terms, j = [], 2
    while True:
        z = rho**j
        terms.append(sum(c * z ** (k - m) for k, c in higher) / j)
        tail = K * rho ** (j + 1) / ((j + 1) * (1 - rho))
        if tail <= tol or j > MAX_J:
            break
        j += 1
    total = math.fsum(terms)
    return SeriesValue(math.exp(total), tail * math.exp(total), len(terms), total)


def log_factorial(N: int) -> float:
    """log N! as a compensated sum of logs (no Stirling approximation)."""
    return math.fsum(np.log(np.arange(2, N + 1, dtype=float))) if N > 1 else 0.0


def log_gamma(z: float) -> float:
    if z <= 0:
        raise DomainError("gamma is evaluated at c_m > 0 only")
    return math.lgamma(z)


# --------------------------------------------------------------------------
# Coefficient extraction used by the combinatorial forms


def log_coeff_C_pow(spec: ExpansiveSpec, N: int, n: int) -> float:
    """log [x^n] C(x)^N through the float series engine."""
    return series_pow(build_C(spec, n, mode="float"), N, n).log_value(n)


def log_coeff_exp_gtm(spec: ExpansiveSpec, k: int) -> float:
    """log [x^k] exp(C_{>m}(x))."""
    if k < 0:
        raise DomainError("coefficient index must be non-negative")
    if k == 0:
        return 0.0
    return series_exp(build_C_gtm(spec, k, mode="float"), k).log_value(k)


# --------------------------------------------------------------------------
# Formulas


def _logs_at(spec: ExpansiveSpec, chi: float, start=None):
    (l0, l2), _, _ = evaluator(spec).log_sums(chi, [(), FALLING[2]], start=start)
    return l0, l2


def g_n_formula(spec: ExpansiveSpec, n: int) -> AsymptoticEstimate:
    """G^{>=2}(rho,1) e^{C(z)} / sqrt(2 pi z^2 C''(z)) z^{-n} with z C'(z) = n."""
    z = solve_univariate(spec, n)
    chi = math.log(spec.r / z)
    l0, l2 = _logs_at(spec, chi)
    G2 = G_ge2(spec, spec.r, 1.0)
    log_val = G2.log_value + math.exp(l0) - 0.5 * (math.log(2 * math.pi) + l2) - n * math.log(z)
    return AsymptoticEstimate("G_n_LLT", n, None, log_val, inputs={"z_n": z, "chi": chi},
                              constant_tails={"G_ge2": G2.tail_bound})


def _check_regime(sol: SaddleSolution, wanted: str, form: str, enforce: bool):
    if enforce and sol.regime != wanted:
        raise ContractError(f"{form} needs regime {wanted}, solution is {sol.regime} (lambda={sol.lam:.3f})")


def gnN_case1(spec: ExpansiveSpec, sol: SaddleSolution, form: str = "LLT_I",
              enforce_regime: bool = True) -> AsymptoticEstimate:
    if form not in CASE_I_FORMS:
        raise ContractError(f"{form} is not a first-regime formula")
    _check_regime(sol, "CaseI", form, enforce_regime)
    n, N, x, y = sol.n, sol.N, sol.x_n, sol.y_n
    G2 = G_ge2(spec, spec.r, y)
    if form == "LLT_I":
        log_val = (G2.log_value + y * sol.C - math.log(2 * math.pi)
                   - 0.5 * math.log(N * y * sol.x2C2 / (spec.a + 1))
                   - n * math.log(x) - N * math.log(y))
    elif form == "Explicit_I":
        q = spec.r**spec.m * y
        log_val = (G2.log_value + 0.5 * math.log(spec.a) - math.log(2 * math.pi)
                   - spec.c_m * q / (1 - q) - math.log(n)
                   - n * math.log(x) - N * (math.log(y) - 1))
    else:
        log_val = G2.log_value - log_factorial(N) + log_coeff_C_pow(spec, N, n)
    return AsymptoticEstimate(form, n, N, log_val, 1, sol.regime, sol.lam, sol.record(),
                              {"G_ge2": G2.tail_bound})


def gnN_case2(spec: ExpansiveSpec, sol: SaddleSolution, form: str = "LLT_II",
              enforce_regime: bool = True) -> AsymptoticEstimate:
    """Second-regime forms.

    ``LLT_II`` is G^{>=2}_{>m}(rho) ((1-a_n)N)^(c_m-1)/Gamma(c_m) e^{C_{>m}(x)}
    / sqrt(2 pi rho^-m x^2 C''(x)) x^-(n-mN), i.e. the product of the
    asymptotics of G(x_n, y_n), Pr[count = N] and the conditional size
    probability.  ``LLT_II_printed`` drops the multiset factor of the size-m
    components and agrees with ``LLT_II`` only when c_m = 1.
    """
    if form not in CASE_II_FORMS + EXTRA_FORMS:
        raise ContractError(f"{form} is not a second-regime formula")
    _check_regime(sol, "CaseII", form, enforce_regime)
    n, N, x = sol.n, sol.N, sol.x_n
    rest = n - spec.m * N
    if rest < 1:
        raise DomainError("n - mN must be positive")
    G2 = G_ge2_gtm(spec)
    inputs = sol.record()
    c_m = spec.c_m
    log_pref = 0.0
    if form != "LLT_II_printed":
        a_n = compute_a_n(spec, n, N)
        inputs["a_n"] = a_n
        if a_n >= 1:
            raise DomainError(f"a_n = {a_n!r} >= 1: the prefactor ((1-a_n)N)^(c_m-1) is undefined")
        log_pref = (c_m - 1) * math.log((1 - a_n) * N) - log_gamma(c_m)
    if form == "Comb_II":
        log_val = G2.log_value + log_pref + log_coeff_exp_gtm(spec, rest)
    else:
        (l_gtm,), _, _ = evaluator(spec).log_sums(sol.chi_n, [()], start=spec.m + 1)
        C_gtm = math.exp(l_gtm - spec.m * math.log(x))
        log_val = (G2.log_value + log_pref + C_gtm
                   - 0.5 * (math.log(2 * math.pi) - spec.m * math.log(spec.r) + math.log(sol.x2C2))
                   - rest * math.log(x))
    return AsymptoticEstimate(form, n, N, log_val, 1, sol.regime, sol.lam, inputs,
                              {"G_ge2_gtm": G2.tail_bound})


def estimate(spec: ExpansiveSpec, sol: SaddleSolution, form: str, enforce_regime: bool = True):
    if form in CASE_I_FORMS:
        return gnN_case1(spec, sol, form, enforce_regime)
    if form in CASE_II_FORMS + EXTRA_FORMS:
        return gnN_case2(spec, sol, form, enforce_regime)
    raise ContractError(f"unknown formula {form!r}")


def forms_for(regime: str) -> tuple:
    return {"CaseI": CASE_I_FORMS, "CaseII": CASE_II_FORMS}.get(regime, ())


def N_at(spec: ExpansiveSpec, n: int, lam: float) -> int:
    """N = floor(lambda N*_n)."""
    return int(math.floor(lam * solve_Nstar(spec, n).N_star))


# --------------------------------------------------------------------------
# Comparison with exact coefficients


def relative_error(log_formula: float, log_exact: float) -> float:
    """|formula/exact - 1|; an infinite formula value gives inf."""
    if not math.isfinite(log_formula):
        return math.inf
    d = log_formula - log_exact
    return abs(math.expm1(d)) if d < 700 else math.inf


def compare_point(spec: ExpansiveSpec, n: int, N: int, forms=None, enforce_regime: bool = True) -> list[dict]:
    """Rows (n, N, exact_log, formula, formula_log, ratio) against the exact table entry."""
    sol = solve_bivariate(spec, n, N)
    exact = log_gnN(spec, n, N)
    forms = forms or forms_for(sol.regime)
    rows = []
    for form in forms:
        row = {"n": n, "N": N, "regime": sol.regime, "lam": sol.lam, "formula": form, "exact_log": exact}
        try:
            est = estimate(spec, sol, form, enforce_regime)
            row["formula_log"] = est.log_value
            row["ratio"] = math.exp(est.log_value - exact)
            row["note"] = ""
        except (ContractError, DomainError) as exc:
            row["formula_log"] = math.inf if isinstance(exc, DomainError) else math.nan
            row["ratio"] = row["formula_log"]
            row["note"] = str(exc)
        rows.append(row)
    return rows


def compare_gn(spec: ExpansiveSpec, n: int) -> dict:
    exact = log_gn(spec, n)
    est = g_n_formula(spec, n)
    return {"n": n, "N": None, "formula": "G_n_LLT", "exact_log": exact, "formula_log": est.log_value,
            "ratio": math.exp(est.log_value - exact), "regime": None, "lam": None, "note": ""}
