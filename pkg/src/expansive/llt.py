"""Local limit checks for sums of tilted components.

L_p = sum_{i<=p} (C_i - m) with C_i iid from c_k x^k / C(x).  Its pmf is the
coefficient sequence of H(z)^p, H(z) = z^-m C(xz) / C(x), extracted exactly
(up to float rounding), and compared with the Gaussian local prediction
e^{-t^2/2} / (sqrt(2 pi) sigma_p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PrecisionError
from .model import ExpansiveSpec
from .saddle import FALLING, evaluator, solve_bivariate
from .series import CoeffVector, series_pow

DIRECT_LIMIT = 4096   # lengths up to this use the quadratic series engine
ALIAS_LOG_TOL = math.log(1e-18)


@dataclass(frozen=True)
class TiltedMoments:
    p: int
    x_n: float
    nu: float
    mu_p: float
    sigma_p: float
    chi_n: float


def tilted_moments(spec: ExpansiveSpec, x_n: float, p: int) -> TiltedMoments:
    """mu_p = p (nu - m), sigma_p^2 = p ((x^2C'' + xC')/C - nu^2) with nu = xC'/C."""
    if p < 1:
        raise DomainError("p must be positive")
    chi = math.log(spec.r / x_n)
    (l0, l1, l2), _, _ = evaluator(spec).log_sums(chi, [(), FALLING[1], FALLING[2]])
    nu = math.exp(l1 - l0)
    var1 = math.exp(l2 - l0) + nu - nu * nu
    if not var1 > 0:
        raise PrecisionError("component variance is not positive in double precision")
    return TiltedMoments(p, x_n, nu, p * (nu - spec.m), math.sqrt(p * var1), chi)


def _shifted_component_pmf(spec: ExpansiveSpec, chi: float, length: int) -> np.ndarray:
    """Pr[C - m = k] for k < length (tail beyond is below 1e-15 or cut at length)."""
    ev = evaluator(spec)
    (log_C,), _, terms = ev.log_sums(chi, [()], rtol=1e-16)
    m = spec.m
    top = min(m + terms, m + length)
    k = np.arange(m, top)
    out = np.zeros(length)
    out[: top - m] = np.exp(ev.logw[m:top] - chi * k - log_C)
    return out


def _fft_length(spec: ExpansiveSpec, chi: float, p: int, n_max: int) -> int:
    """A length beyond which L_p has Chernoff-bounded mass < 1e-18 (no aliasing)."""
    ev = evaluator(spec)
    (l_full,), _, _ = ev.log_sums(chi, [()])
    (l_half,), _, _ = ev.log_sums(chi / 2, [()])
    theta = chi / 2
    log_mgf = p * (l_half - l_full - spec.m * theta)
    need = int(math.ceil((log_mgf - ALIAS_LOG_TOL) / theta)) + 1
    L = max(need, n_max + 1)
    return 1 << (L - 1).bit_length()


def Lp_pmf_vector(spec: ExpansiveSpec, x_n: float, p: int, n_max: int, method: str = "auto") -> np.ndarray:
    """Pr[L_p = s] for s = 0..n_max."""
    if p < 1:
        raise DomainError("p must be positive")
    chi = math.log(spec.r / x_n)
    if method == "auto":
        method = "series" if n_max + 1 <= DIRECT_LIMIT else "fft"
    if method == "series":
        h = _shifted_component_pmf(spec, chi, n_max + 1)
        return np.asarray(series_pow(CoeffVector(h, "float"), p, n_max).tolist(), dtype=float)
    if method != "fft":
        raise DomainError(f"unknown method {method!r}")
    L = _fft_length(spec, chi, p, n_max)
    h = _shifted_component_pmf(spec, chi, L)
    phi = np.fft.rfft(h)
    pmf = np.fft.irfft(phi**p, n=L)
    return pmf[: n_max + 1]


def exact_Lp_pmf(spec: ExpansiveSpec, x_n: float, p: int, s_values, n_max: int | None = None,
                 method: str = "auto") -> dict:
    """Map s -> Pr[L_p = s] = Pr[K_p = s + mp] for the requested lattice points.

    ``n_max`` truncates K_p = sum of the p component sizes, so it must reach
    max(s) + mp.
    """
    s_values = [int(s) for s in s_values]
    if any(s < 0 for s in s_values):
        raise DomainError("L_p is non-negative")
    need = max(s_values) + spec.m * p
    if n_max is None:
        n_max = need
    if n_max < need:
        raise PrecisionError(f"truncation n_max={n_max} cannot reach the requested coefficients; use n_max >= {need}")
    pmf = Lp_pmf_vector(spec, x_n, p, n_max - spec.m * p, method)
    return {s: float(pmf[s]) for s in s_values}


def llt_prediction(moments: TiltedMoments, t: float) -> float:
    """e^{-t^2/2} / (sqrt(2 pi) sigma_p)."""
    if not moments.sigma_p > 0:
        raise DomainError("sigma_p must be positive")
    return math.exp(-t * t / 2) / (math.sqrt(2 * math.pi) * moments.sigma_p)


def llt_prediction_chi(moments: TiltedMoments, t: float, alpha: float) -> float:
    """The same prediction with sigma_p replaced by its first-order form sqrt(p alpha) / chi."""
    return math.exp(-t * t / 2) * moments.chi_n / (math.sqrt(2 * math.pi) * math.sqrt(moments.p * alpha))


def llt_check(spec: ExpansiveSpec, n: int, N: int, p_grid, t_grid=(0.0, 1.0, 2.0)) -> list[dict]:
    """Rows (p, t, lattice_offset, exact, predicted, ratio) at the saddle point of (n, N)."""
    sol = solve_bivariate(spec, n, N)
    rows = []
    for p in p_grid:
        mom = tilted_moments(spec, sol.x_n, int(p))
        targets = {t: mom.mu_p + t * mom.sigma_p for t in t_grid}
        lattice = {t: int(round(v)) for t, v in targets.items()}
        pmf = exact_Lp_pmf(spec, sol.x_n, int(p), lattice.values())
        for t in t_grid:
            s = lattice[t]
            exact = pmf[s]
            pred = llt_prediction(mom, t)
            rows.append({"p": int(p), "t": t, "lattice_offset": s - targets[t], "exact": exact,
                         "predicted": pred, "ratio": exact / pred})
    return rows


def sum_component_probability(spec: ExpansiveSpec, n: int, N: int) -> tuple[float, float]:
    """(Pr[sum_{i<=N} C_{1,i} = n], sqrt(alpha/2pi) sqrt(N)/n) at the saddle point of (n, N)."""
    sol = solve_bivariate(spec, n, N)
    s = n - spec.m * N
    pr = exact_Lp_pmf(spec, sol.x_n, N, [s])[s]
    return pr, math.sqrt(spec.a / (2 * math.pi)) * math.sqrt(N) / n
