import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from expansive.asym import N_at
from expansive.boltz import sample_gamma_C
from expansive.errors import DomainError, PrecisionError
from expansive.llt import (Lp_pmf_vector, exact_Lp_pmf, llt_check, llt_prediction, llt_prediction_chi,
                           sum_component_probability, tilted_moments)
from expansive.model import Constant, ExpansiveSpec, LogPower, coeff_c
from expansive.saddle import eval_C_deriv, solve_bivariate


def test_moments_against_derivatives():
    spec = ExpansiveSpec("3/2", "0.3", LogPower(1), 2)
    x = 0.28
    C0, C1, C2 = (eval_C_deriv(spec, x, k).value for k in range(3))
    mom = tilted_moments(spec, x, 7)
    nu = x * C1 / C0
    assert mom.nu == pytest.approx(nu, rel=1e-12)
    assert mom.mu_p == pytest.approx(7 * (nu - 2), rel=1e-12)
    assert mom.sigma_p**2 == pytest.approx(7 * ((x * x * C2 + x * C1) / C0 - nu * nu), rel=1e-9)
    assert mom.chi_n == pytest.approx(math.log(0.3 / x), rel=1e-14)


def test_moments_geometric_closed_form(ref_spec):
    # the ref tilted law is geometric on {1, 2, ...} with ratio q = 2x
    x = 0.45
    q = 2 * x
    mom = tilted_moments(ref_spec, x, 10)
    assert mom.nu == pytest.approx(1 / (1 - q), rel=1e-13)
    assert mom.sigma_p == pytest.approx(math.sqrt(10 * q) / (1 - q), rel=1e-12)


def test_p1_is_tilted_law():
    spec = ExpansiveSpec(2, "0.5", Constant(3), 2)
    x = 0.4
    C = eval_C_deriv(spec, x, 0).value
    pmf = exact_Lp_pmf(spec, x, 1, range(30))
    for s in range(30):
        assert pmf[s] == pytest.approx(float(coeff_c(spec, s + 2, "mp")) * x ** (s + 2) / C, rel=1e-12)


@pytest.mark.parametrize("p", [1, 3, 50, 400])
def test_pmf_against_negative_binomial(ref_spec, p):
    x = 0.4
    q = 2 * x
    s = np.arange(0, 600)
    pmf = Lp_pmf_vector(ref_spec, x, p, 599)
    expect = stats.nbinom.pmf(s, p, 1 - q)
    # the component table is cut where its remaining mass is below 1e-16
    bulk = expect > 1e-12 * expect.max()
    assert np.allclose(pmf[bulk], expect[bulk], rtol=1e-8, atol=0)
    assert np.max(np.abs(pmf - expect)) < 1e-15


def test_pmf_sums_to_one():
    spec = ExpansiveSpec("3/2", "0.3", LogPower(1), 2)
    pmf = Lp_pmf_vector(spec, 0.25, 40, 3000)
    assert np.all(pmf >= 0)
    assert abs(pmf.sum() - 1) < 1e-10


def test_p2_is_self_convolution():
    spec = ExpansiveSpec("1/2", "0.5", LogPower(-1), 3)
    x = 0.45
    one = Lp_pmf_vector(spec, x, 1, 200)
    two = Lp_pmf_vector(spec, x, 2, 200)
    direct = np.array([math.fsum(one[i] * one[s - i] for i in range(s + 1)) for s in range(201)])
    assert np.allclose(two, direct, rtol=1e-12, atol=1e-300)


def test_series_and_fft_routes_agree():
    spec = ExpansiveSpec(2, "0.5", LogPower(1), 1)
    x = 0.49
    a = Lp_pmf_vector(spec, x, 300, 3000, method="series")
    b = Lp_pmf_vector(spec, x, 300, 3000, method="fft")
    mask = a > 1e-14 * a.max()
    assert np.allclose(a[mask], b[mask], rtol=1e-8)


def test_fft_route_large_support(ref_spec):
    x = 0.499
    p = 500
    pmf = Lp_pmf_vector(ref_spec, x, p, 6000)
    s = np.arange(6001)
    expect = stats.nbinom.pmf(s, p, 1 - 2 * x)
    mask = expect > 1e-12 * expect.max()
    assert np.allclose(pmf[mask], expect[mask], rtol=1e-8)


def test_truncation_hint(ref_spec):
    with pytest.raises(PrecisionError, match="n_max >= 25"):
        exact_Lp_pmf(ref_spec, 0.3, 5, [20], n_max=24)
    with pytest.raises(DomainError):
        exact_Lp_pmf(ref_spec, 0.3, 0, [1])


def test_prediction_forms(ref_spec):
    mom = tilted_moments(ref_spec, 0.45, 10)
    assert llt_prediction(mom, 0) == pytest.approx(1 / (math.sqrt(2 * math.pi) * mom.sigma_p), rel=1e-15)
    assert llt_prediction(mom, 1) / llt_prediction(mom, 0) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_prediction_chi_form_converges(ref_spec):
    devs = []
    for n in (10**3, 10**4, 10**5, 10**6):
        sol = solve_bivariate(ref_spec, n, N_at(ref_spec, n, 0.5))
        mom = tilted_moments(ref_spec, sol.x_n, 100)
        devs.append(abs(llt_prediction_chi(mom, 0, ref_spec.a) / llt_prediction(mom, 0) - 1))
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 0.01


def test_llt_check_trends(ref_spec):
    n = 3200
    rows = llt_check(ref_spec, n, N_at(ref_spec, n, 0.5), [200, 800, 3200])
    for r in rows:
        assert abs(r["lattice_offset"]) <= 0.5
    t0 = [abs(r["ratio"] - 1) for r in rows if r["t"] == 0]
    assert all(b < a for a, b in zip(t0, t0[1:]))
    by_p = {p: {r["t"]: r["exact"] for r in rows if r["p"] == p} for p in (200, 800, 3200)}
    assert abs(by_p[3200][1.0] / by_p[3200][0.0] / math.exp(-0.5) - 1) < 0.1
    t1 = [abs(r["ratio"] - 1) for r in rows if r["t"] == 1]
    assert t1[-1] < t1[0]


def test_sum_of_components_probability(ref_spec):
    n = 3200
    pr, pred = sum_component_probability(ref_spec, n, N_at(ref_spec, n, 0.5))
    assert abs(pr / pred - 1) < 0.1


def test_sampled_moments(ref_spec):
    spec = ExpansiveSpec("3/2", "0.3", LogPower(1), 2)
    x = 0.27
    draws = sample_gamma_C(spec, x, np.random.default_rng(17), size=100_000).astype(float)
    mom = tilted_moments(spec, x, 1)
    se_mean = draws.std() / math.sqrt(len(draws))
    assert abs(draws.mean() - mom.nu) <= 4 * se_mean
    centred = (draws - draws.mean()) ** 2
    se_var = centred.std() / math.sqrt(len(draws))
    assert abs(centred.mean() - mom.sigma_p**2) <= 4 * se_var


# --------------------------------------------------------------------------
# properties

specs = st.builds(ExpansiveSpec, st.sampled_from(["1/2", "1", "2"]), st.sampled_from(["0.3", "0.5"]),
                  st.sampled_from([Constant(1), LogPower(1), LogPower(-1)]), st.integers(1, 3))


@given(specs, st.floats(0.3, 0.9), st.integers(1, 60))
def test_pmf_is_distribution(spec, frac, p):
    x = frac * spec.r
    mom = tilted_moments(spec, x, p)
    assert mom.sigma_p > 0
    n_max = int(mom.mu_p + 40 * mom.sigma_p + 200)
    pmf = Lp_pmf_vector(spec, x, p, n_max)
    assert np.all(pmf >= 0)
    assert abs(pmf.sum() - 1) < 1e-10
    s = np.arange(n_max + 1)
    assert math.fsum(s * pmf) == pytest.approx(mom.mu_p, rel=1e-8, abs=1e-10)
