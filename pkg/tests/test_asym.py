import math

import mpmath
import pytest

from expansive.asym import (CASE_I_FORMS, G_ge2, G_ge2_gtm, G_ge2_gtm_poly, N_at, compare_gn, compare_point,
                            estimate, g_n_formula, gnN_case1, gnN_case2, log_coeff_C_pow, log_factorial,
                            log_gamma, relative_error)
from expansive.errors import ContractError, DomainError
from expansive.model import Constant, ExpansiveSpec, LogPower, coeff_c
from expansive.saddle import compute_a_n, solve_bivariate
from expansive.series import log_gn, log_gnN


def direct_C(spec, x, terms=3000):
    with mpmath.workprec(160):
        x = mpmath.mpf(x)
        return sum(coeff_c(spec, j, "mp") * x**j for j in range(spec.m, terms))


def decreasing(seq):
    return all(b < a for a, b in zip(seq, seq[1:]))


def test_G_ge2_examples(ref_spec):
    assert G_ge2(ref_spec, 0.5, 0.0).value == 1.0
    # oracle: sum_{j=2}^{60} C(0.5^j)/j with C(x) = 2x/(1-2x)
    with mpmath.workprec(160):
        s = sum((2 * mpmath.mpf(0.5) ** j / (1 - 2 * mpmath.mpf(0.5) ** j)) / j for j in range(2, 61))
        oracle = float(mpmath.exp(s))
    assert G_ge2(ref_spec, 0.5, 1.0).value == pytest.approx(oracle, rel=1e-12)


def test_G_ge2_general_spec_direct_sum():
    spec = ExpansiveSpec("3/2", "0.4", LogPower(1), 2)
    x, y = 0.4, 3.0
    with mpmath.workprec(160):
        s = sum(direct_C(spec, mpmath.mpf(x) ** j, 200) * mpmath.mpf(y) ** j / j for j in range(2, 80))
    assert G_ge2(spec, x, y).log_value == pytest.approx(float(s), rel=1e-12)


def test_G_ge2_increasing_in_y(ref_spec):
    vals = [G_ge2(ref_spec, 0.5, y).value for y in [0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8]]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_G_ge2_divergence(ref_spec):
    with pytest.raises(DomainError):
        G_ge2(ref_spec, 0.5, 2.0)


def test_G_ge2_gtm():
    assert G_ge2_gtm_poly([0, 3], 0.5).value == 1.0
    assert G_ge2_gtm_poly([0, 0, 2], 0.5).value == 1.0
    spec = ExpansiveSpec(1, "0.5")
    # (C(rho^j) - c_1 rho^j)/rho^j with C(x) = 2x/(1-2x): 2/(1-2^{1-j}) - 2
    with mpmath.workprec(160):
        s = sum((2 / (1 - mpmath.mpf(2) ** (1 - j)) - 2) / j for j in range(2, 61))
    v = G_ge2_gtm(spec)
    assert v.value == pytest.approx(float(mpmath.exp(s)), rel=1e-12)
    assert v.value >= 1
    assert G_ge2_gtm(ExpansiveSpec(2, "0.3", LogPower(1), 2)).value >= 1


def test_log_helpers():
    assert log_factorial(0) == 0
    assert log_factorial(30) == pytest.approx(math.log(math.factorial(30)), rel=1e-15)
    for z in (0.1, 0.5, 1.0, 2.0, 7.3, 25.0, 50.0):
        assert abs(log_gamma(z) - float(mpmath.loggamma(z))) <= 1e-12 * max(1.0, abs(log_gamma(z)))
        assert math.exp(log_gamma(z)) == pytest.approx(float(mpmath.gamma(z)), rel=1e-12)
    assert relative_error(math.log(1.1), 0.0) == pytest.approx(0.1)
    assert relative_error(math.inf, 0.0) == math.inf


def test_comb_coefficient(ref_spec):
    # [x^n] (2x/(1-2x))^N = 2^n binom(n-1, N-1)
    got = log_coeff_C_pow(ref_spec, 7, 30)
    assert got == pytest.approx(30 * math.log(2) + math.log(math.comb(29, 6)), rel=1e-13)


def test_gn_formula(ref_spec):
    ratios = [math.exp(g_n_formula(ref_spec, n).log_value - log_gn(ref_spec, n)) for n in (200, 400, 800)]
    assert decreasing([abs(r - 1) for r in ratios])
    logs = [g_n_formula(ref_spec, n).log_value for n in (50, 100, 200)]
    assert all(math.isfinite(v) for v in logs) and decreasing([-v for v in logs])


def test_gn_formula_value_at_200(ref_spec):
    # mp oracle: C = 2x/(1-2x) gives the saddle point and C'' in closed form
    with mpmath.workprec(200):
        n = 200
        u = (mpmath.sqrt(1 + 4 * mpmath.mpf(n)) - 1) / (2 * n)  # u = 1 - 2z solves n u^2 + u - 1 = 0
        z = (1 - u) / 2
        C = 2 * z / (1 - 2 * z)
        C2 = 8 / (1 - 2 * z) ** 3
        Ge2 = mpmath.exp(mpmath.nsum(lambda j: (2 * mpmath.mpf(0.5) ** j / (1 - 2 * mpmath.mpf(0.5) ** j)) / j,
                                     [2, mpmath.inf]))
        log_formula = mpmath.log(Ge2) + C - mpmath.log(2 * mpmath.pi * z**2 * C2) / 2 - n * mpmath.log(z)
    assert g_n_formula(ref_spec, 200).log_value == pytest.approx(float(log_formula), rel=1e-12)
    ratio = math.exp(float(log_formula) - log_gn(ref_spec, 200))
    assert ratio == pytest.approx(1.2046, abs=5e-4)


@pytest.mark.xfail(strict=True, reason="the formula over-counts g_200 by 20.5%; only the trend improves with n")
def test_gn_formula_within_15pct_at_200(ref_spec):
    ratio = math.exp(g_n_formula(ref_spec, 200).log_value - log_gn(ref_spec, 200))
    assert abs(ratio - 1) <= 0.15


def test_case1_forms_agree(ref_spec):
    n = 3000
    sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 0.5))
    vals = [gnN_case1(ref_spec, sol, f).log_value for f in CASE_I_FORMS]
    for a in vals:
        for b in vals:
            assert abs(math.expm1(a - b)) < 0.05


def test_case1_llt_improves(ref_spec):
    errs = []
    for n in (200, 400, 800):
        sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 0.5))
        errs.append(relative_error(gnN_case1(ref_spec, sol, "LLT_I").log_value, log_gnN(ref_spec, n, sol.N)))
    assert decreasing(errs)


def test_case1_small_lambda_limit(ref_spec):
    # with N = floor(sqrt(N*)), y_n -> 0 and the exp(-c_m rho^m y/(1 - rho^m y)) factor -> 1
    from expansive.saddle import solve_Nstar
    factors = []
    for n in (10**3, 10**4, 10**5):
        N = int(math.sqrt(solve_Nstar(ref_spec, n).N_star))
        sol = solve_bivariate(ref_spec, n, N)
        q = ref_spec.r * sol.y_n
        factors.append(math.exp(-ref_spec.c_m * q / (1 - q)))
    assert decreasing([1 - f for f in factors])


def test_regime_contract(ref_spec):
    sol1 = solve_bivariate(ref_spec, 1000, N_at(ref_spec, 1000, 0.5))
    sol2 = solve_bivariate(ref_spec, 1000, N_at(ref_spec, 1000, 2))
    with pytest.raises(ContractError):
        gnN_case1(ref_spec, sol2, "LLT_I")
    with pytest.raises(ContractError):
        gnN_case2(ref_spec, sol1, "LLT_II")
    with pytest.raises(ContractError):
        estimate(ref_spec, sol1, "Explicit_II")
    with pytest.raises(DomainError):  # rho^m y_n > 1 in CaseII: G^{>=2}(rho, y) diverges
        gnN_case1(ref_spec, sol2, "LLT_I", enforce_regime=False)


def test_case2_forms_agree(ref_spec):
    n = 3000
    sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 2))
    a = gnN_case2(ref_spec, sol, "LLT_II").log_value
    b = gnN_case2(ref_spec, sol, "Comb_II").log_value
    assert abs(math.expm1(a - b)) < 0.10


def test_case2_llt_improves(ref_spec):
    errs = []
    for n in (400, 800, 1600):
        sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 2))
        errs.append(relative_error(gnN_case2(ref_spec, sol, "LLT_II").log_value, log_gnN(ref_spec, n, sol.N)))
    assert decreasing(errs)


def test_case2_printed_form_differs_by_prefactor(ref_spec):
    n = 3000
    sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 2))
    a_n = compute_a_n(ref_spec, n, sol.N)
    cm = ref_spec.c_m
    expect = (cm - 1) * math.log((1 - a_n) * sol.N) - math.lgamma(cm)
    diff = gnN_case2(ref_spec, sol, "LLT_II").log_value - gnN_case2(ref_spec, sol, "LLT_II_printed").log_value
    assert diff == pytest.approx(expect, rel=1e-12)


def test_case2_unit_cm_has_no_prefactor():
    spec = ExpansiveSpec(1, "0.5", Constant("1/2"), 1)  # c_1 = 1
    assert spec.c_m == 1.0
    n = 2000
    sol = solve_bivariate(spec, n, N_at(spec, n, 2))
    assert gnN_case2(spec, sol, "LLT_II").log_value == pytest.approx(
        gnN_case2(spec, sol, "LLT_II_printed").log_value, rel=1e-15)
    comb = gnN_case2(spec, sol, "Comb_II")
    from expansive.asym import log_coeff_exp_gtm
    assert comb.log_value == pytest.approx(G_ge2_gtm(spec).log_value + log_coeff_exp_gtm(spec, n - sol.N), rel=1e-13)


def test_comb_I_is_product_of_parts(ref_spec):
    n = 600
    sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 0.5))
    comb = gnN_case1(ref_spec, sol, "Comb_I").log_value
    parts = G_ge2(ref_spec, 0.5, sol.y_n).log_value - log_factorial(sol.N) + log_coeff_C_pow(ref_spec, sol.N, n)
    assert comb == pytest.approx(parts, rel=1e-14)


def test_small_cases_positive(ref_spec):
    for n in (20, 40, 60):
        sol = solve_bivariate(ref_spec, n, max(1, N_at(ref_spec, n, 0.5)))
        for f in CASE_I_FORMS:
            est = gnN_case1(ref_spec, sol, f, enforce_regime=False)
            assert est.sign == 1 and math.isfinite(est.log_value)


def test_cross_form_consistency_shrinks(ref_spec):
    spread = []
    for n in (750, 1500, 3000):
        sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 0.5))
        vals = [gnN_case1(ref_spec, sol, f).log_value for f in CASE_I_FORMS]
        spread.append(max(vals) - min(vals))
    assert decreasing(spread)


def test_phase_transition_witness(ref_spec):
    n = 800
    for lam, good, bad in ((0.5, "LLT_I", "LLT_II"), (2, "LLT_II", "LLT_I")):
        rows = {r["formula"]: r for r in compare_point(ref_spec, n, N_at(ref_spec, n, lam), [good, bad],
                                                       enforce_regime=False)}
        err = lambda r: relative_error(r["formula_log"], r["exact_log"])
        assert err(rows[good]) < err(rows[bad])


def test_unimodal_in_N(ref_spec):
    from expansive.series import float_table
    n = 400
    t = float_table(ref_spec, n, n)
    logs = [t.log_value(n, N) for N in range(1, n + 1)]
    peak = max(range(len(logs)), key=logs.__getitem__)
    assert all(b > a for a, b in zip(logs[:peak], logs[1:peak + 1]))
    assert all(b < a for a, b in zip(logs[peak:], logs[peak + 1:]))


def test_compare_gn_record(ref_spec):
    rec = compare_gn(ref_spec, 100)
    assert rec["formula"] == "G_n_LLT" and rec["ratio"] == pytest.approx(
        math.exp(rec["formula_log"] - rec["exact_log"]))
