"""Truncated power series for C(x), G(x, y), C(x)^N and exp(C_{>m}(x)).

Three arithmetic modes share one code path through numpy arrays:

* ``exact``: object arrays of ``Fraction``; results are bit-exact.
* ``mp``: object arrays of ``mpmath.mpf`` at the working precision.
* ``float``: float64 arrays with a geometric rescaling, ``stored[k] = c_k r**k``
  (and ``s**N`` in the second variable of a bivariate table), so that series
  with radius ``rho < 1`` can be pushed to a few thousand terms without overflow.

All operations keep the scale of their input; ``value``/``log_value`` undo it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import ConfigError, DomainError, PrecisionError, SizeGuardError
from .model import ExpansiveSpec, coeff_c, get_precision, resolve_mode, to_fraction, weights

MAX_TABLE_CELLS = 10**7


def _one(mode):
    if mode == "exact":
        return Fraction(1)
    if mode == "mp":
        return mpmath.mpf(1)
    return 1.0


def _zeros(mode, shape):
    if mode == "float":
        return np.zeros(shape)
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0) if mode == "exact" else mpmath.mpf(0))
    return out


def _is_zero(v) -> bool:
    return v == 0


def _at_working_precision(fn):
    """Run an operation with mpmath at the configured mantissa width."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with mpmath.workprec(get_precision()):
            return fn(*args, **kwargs)

    return wrapper


def _mp(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


@dataclass(frozen=True, eq=False)
class CoeffVector:
    """Coefficients of x^0..x^n_max.

    In float mode the true coefficient of x^k is ``coeffs[k] * exp(log_factor) / scale**k``.
    """

    coeffs: np.ndarray
    mode: str
    scale: float = 1.0
    log_factor: float = 0.0

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self):
        return len(self.coeffs)

    def value(self, k: int):
        """True coefficient of x^k (mpf when a float vector is rescaled)."""
        v = self.coeffs[k]
        if self.mode != "float" or (self.scale == 1.0 and self.log_factor == 0.0):
            return v
        with mpmath.workprec(64):
            return mpmath.mpf(v) * mpmath.exp(self.log_factor) / mpmath.mpf(self.scale) ** k

    def log_value(self, k: int) -> float:
        v = self.coeffs[k]
        if v <= 0:
            return -math.inf if v == 0 else math.nan
        if self.mode == "float":
            return math.log(v) + self.log_factor - k * math.log(self.scale)
        return float(mpmath.log(_mp(v)))

    def tolist(self) -> list:
        return [self.value(k) for k in range(len(self.coeffs))]

    @classmethod
    def from_raw(cls, values: Sequence, mode: str | None = None, scale: float = 1.0) -> "CoeffVector":
        """Wrap user-supplied coefficients (index 0 is the constant term)."""
        values = list(values)
        if mode is None:
            mode = "float" if any(isinstance(v, float) for v in values) else "exact"
        if mode == "exact":
            if any(isinstance(v, (float, mpmath.mpf)) for v in values):
                raise ConfigError("exact mode cannot take floating-point coefficients")
            arr = np.empty(len(values), dtype=object)
            arr[:] = [to_fraction(v) for v in values]
        elif mode == "mp":
            with mpmath.workprec(get_precision()):
                arr = np.empty(len(values), dtype=object)
                arr[:] = [_mp(to_fraction(v)) if isinstance(v, str) else _mp(v) for v in values]
        elif mode == "float":
            arr = np.asarray([float(v) for v in values], dtype=float)
        else:
            raise ConfigError(f"unknown arithmetic mode {mode!r}")
        return cls(arr, mode, scale)


def first_nonzero(c: CoeffVector) -> int | None:
    for k, v in enumerate(c.coeffs):
        if not _is_zero(v):
            return k
    return None


def build_C(spec: ExpansiveSpec, n_max: int, mode: str = "auto") -> CoeffVector:
    """Coefficients of C(x) up to x^n_max.  Float mode is rescaled by rho."""
    if n_max < spec.m:
        raise DomainError(f"n_max={n_max} is below the threshold m={spec.m}")
    mode = resolve_mode(spec, mode)
    if mode == "float":
        return CoeffVector(weights(spec, n_max), "float", spec.r)
    arr = _zeros(mode, n_max + 1)
    with mpmath.workprec(get_precision()):
        for k in range(1, n_max + 1):
            arr[k] = coeff_c(spec, k, mode)
    return CoeffVector(arr, mode)


def build_C_gtm(spec: ExpansiveSpec, n_max: int, mode: str = "auto") -> CoeffVector:
    """C_{>m}(x) = (C(x) - c_m x^m) / x^m: coefficient of x^k is c_{k+m}, k >= 1."""
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    mode = resolve_mode(spec, mode)
    if mode == "float":
        w = weights(spec, n_max + spec.m)
        arr = np.zeros(n_max + 1)
        arr[1:] = w[spec.m + 1:] * spec.r ** (-spec.m)
        return CoeffVector(arr, "float", spec.r)
    arr = _zeros(mode, n_max + 1)
    with mpmath.workprec(get_precision()):
        for k in range(1, n_max + 1):
            arr[k] = coeff_c(spec, k + spec.m, mode)
    return CoeffVector(arr, mode)


# --------------------------------------------------------------------------
# Bivariate tables


@dataclass(frozen=True, eq=False)
class BivariateTable:
    """g[n, N] = [x^n y^N] G(x, y); float tables store g * x_scale**n * y_scale**N."""

    g: np.ndarray
    mode: str
    x_scale: float = 1.0
    y_scale: float = 1.0

    @property
    def n_max(self) -> int:
        return self.g.shape[0] - 1

    @property
    def N_max(self) -> int:
        return self.g.shape[1] - 1

    def value(self, n: int, N: int):
        v = self.g[n, N]
        if self.mode != "float" or (self.x_scale == 1.0 and self.y_scale == 1.0):
            return v
        with mpmath.workprec(64):
            return mpmath.mpf(v) / (mpmath.mpf(self.x_scale) ** n * mpmath.mpf(self.y_scale) ** N)

    def log_value(self, n: int, N: int) -> float:
        v = self.g[n, N]
        if v <= 0:
            return -math.inf if v == 0 else math.nan
        if self.mode == "float":
            return math.log(v) - n * math.log(self.x_scale) - N * math.log(self.y_scale)
        return float(mpmath.log(_mp(v)))

    def row_sum(self, n: int):
        return sum((self.value(n, N) for N in range(self.N_max + 1)), start=_one(self.mode) * 0)

    def nonzero(self):
        for n in range(self.n_max + 1):
            for N in range(self.N_max + 1):
                if not _is_zero(self.g[n, N]):
                    yield n, N, self.value(n, N)


def _check_size(n_max: int, N_max: int):
    if n_max < 0 or N_max < 0:
        raise DomainError("truncation orders must be non-negative")
    cells = (n_max + 1) * (N_max + 1)
    if cells > MAX_TABLE_CELLS:
        raise SizeGuardError(f"table of {cells} cells exceeds the guard of {MAX_TABLE_CELLS}")


def _prepare(c: CoeffVector, n_max: int):
    if not _is_zero(c.coeffs[0]):
        raise DomainError("C(x) must have zero constant term")
    if len(c.coeffs) < n_max + 1:
        raise DomainError(f"coefficient vector has order {c.n_max} < n_max={n_max}")
    return c.coeffs[: n_max + 1]


def _common_denominator(coeffs) -> tuple[list[int], int]:
    """Integer numerators a_k and one denominator D with c_k = a_k / D."""
    D = math.lcm(*(Fraction(v).denominator for v in coeffs))
    return [int(Fraction(v) * D) for v in coeffs], D


def _from_scaled(H: np.ndarray, denom) -> np.ndarray:
    """Fractions H[n, N] / denom(n, N)."""
    out = np.empty(H.shape, dtype=object)
    for n in range(H.shape[0]):
        for N in range(H.shape[1]):
            out[n, N] = Fraction(int(H[n, N]), denom(n, N))
    return out


def _exp_exact(coeffs, m: int, n_max: int, N_max: int) -> np.ndarray:
    """Exact exp recurrence on the integers H[n, N] = n! D^N g[n, N]:
    H[n, N] = sum_{i,j} i a_i D^{j-1} (n-1)!/(n-ij)! H[n-ij, N-j]."""
    a, D = _common_denominator(coeffs)
    fact = [math.factorial(k) for k in range(n_max + 1)]
    H = np.zeros((n_max + 1, N_max + 1), dtype=object)
    H[0, 0] = 1
    j_top = min(N_max, n_max // m)
    for n in range(1, n_max + 1):
        acc = np.zeros(N_max + 1, dtype=object)
        for j in range(1, min(j_top, n // m) + 1):
            i = np.arange(m, n // j + 1)
            w = np.array([k * a[k] * D ** (j - 1) * (fact[n - 1] // fact[n - k * j]) for k in i.tolist()],
                         dtype=object)
            acc[j:] += w @ H[n - j * i, : N_max + 1 - j]
        H[n] = acc
    return _from_scaled(H, lambda n, N: fact[n] * D**N)


def _product_exact(coeffs, n_max: int, N_max: int) -> np.ndarray:
    """Exact factor-by-factor product on the integers H[n, N] = N! D^N g[n, N]:
    multiplying by (1 - x^k y)^(-a_k/D) maps H[n, N] to
    sum_d binom(N, d) prod_{t<d}(a_k + tD) H[n-kd, N-d]."""
    a, D = _common_denominator(coeffs)
    H = np.zeros((n_max + 1, N_max + 1), dtype=object)
    H[0, 0] = 1
    binom = [np.array([math.comb(N, d) for N in range(d, N_max + 1)], dtype=object) for d in range(N_max + 1)]
    for k in range(1, n_max + 1):
        if a[k] == 0:
            continue
        d_max = min(N_max, n_max // k)
        if d_max == 0:
            continue
        new = H.copy()
        P = 1
        for d in range(1, d_max + 1):
            P *= a[k] + (d - 1) * D
            new[k * d:, d:] += (P * binom[d]) * H[: n_max + 1 - k * d, : N_max + 1 - d]
        H = new
    fact = [math.factorial(N) for N in range(N_max + 1)]
    return _from_scaled(H, lambda n, N: fact[N] * D**N)


@_at_working_precision
def mset_exp_transform(c: CoeffVector, n_max: int, N_max: int, y_scale: float = 1.0) -> BivariateTable:
    """Coefficients of exp(sum_j C(x^j) y^j / j) via n g_n(y) = sum_{i,j} i c_i y^j g_{n-ij}(y)."""
    _check_size(n_max, N_max)
    coeffs = _prepare(c, n_max)
    mode = c.mode
    g = _zeros(mode, (n_max + 1, N_max + 1))
    g[0, 0] = _one(mode)
    m = first_nonzero(CoeffVector(coeffs, mode))
    if m is None or N_max == 0:
        return BivariateTable(g, mode, c.scale, y_scale)
    if mode == "exact":
        return BivariateTable(_exp_exact(coeffs, m, n_max, N_max), mode)
    r, s = c.scale, y_scale
    ic = coeffs * np.arange(n_max + 1) if mode == "float" else np.array(
        [k * coeffs[k] for k in range(n_max + 1)], dtype=object)
    j_top = min(N_max, n_max // m)
    # weights[j][i] for the contribution of x^{ij} y^j, rescaled in float mode
    w_by_j = {}
    for j in range(1, j_top + 1):
        i_hi = n_max // j
        w = ic[m: i_hi + 1]
        if mode == "float":
            i = np.arange(m, i_hi + 1)
            w = w * np.exp(i * (j - 1) * math.log(r) + j * math.log(s))
        w_by_j[j] = w
    for n in range(1, n_max + 1):
        acc = _zeros(mode, N_max + 1)
        for j in range(1, min(j_top, n // m) + 1):
            i_hi = n // j
            w = w_by_j[j][: i_hi - m + 1]
            rows = n - j * np.arange(m, i_hi + 1)
            acc[j:] += w @ g[rows, : N_max + 1 - j]
        g[n] = acc / n
    if mode == "float" and not np.all(np.isfinite(g)):
        raise PrecisionError("float table overflowed; use a smaller scale or exact/mp mode")
    return BivariateTable(g, mode, r, s)


def _binomial_weights(ck, d_max: int, mode: str, rk: float, s: float):
    """binom(c+d-1, d) for d = 0..d_max by the rising-factorial recurrence."""
    b = [_one(mode)]
    for d in range(1, d_max + 1):
        if mode == "float":
            b.append(b[-1] * (ck + (d - 1) * rk) / d * s)
        else:
            b.append(b[-1] * (ck + d - 1) / d)
    return b


@_at_working_precision
def mset_product_transform(c: CoeffVector, n_max: int, N_max: int, y_scale: float = 1.0) -> BivariateTable:
    """Coefficients of prod_k (1 - x^k y)^(-c_k), multiplying one factor at a time."""
    _check_size(n_max, N_max)
    coeffs = _prepare(c, n_max)
    mode = c.mode
    g = _zeros(mode, (n_max + 1, N_max + 1))
    g[0, 0] = _one(mode)
    if mode == "exact":
        return BivariateTable(_product_exact(coeffs, n_max, N_max), mode)
    r, s = c.scale, y_scale
    for k in range(1, n_max + 1):
        ck = coeffs[k]
        if _is_zero(ck):
            continue
        d_max = min(N_max, n_max // k)
        if d_max == 0:
            continue
        b = _binomial_weights(ck, d_max, mode, r**k if mode == "float" else 1, s)
        new = g.copy()
        for d in range(1, d_max + 1):
            new[k * d:, d:] += b[d] * g[: n_max + 1 - k * d, : N_max + 1 - d]
        g = new
    if mode == "float" and not np.all(np.isfinite(g)):
        raise PrecisionError("float table overflowed")
    return BivariateTable(g, mode, r, s)


def tables_equal(a: BivariateTable, b: BivariateTable) -> bool:
    return a.g.shape == b.g.shape and bool(np.all(a.g == b.g))


@_at_working_precision
def max_relative_difference(a: BivariateTable, b: BivariateTable) -> float:
    worst = 0.0
    for n in range(a.n_max + 1):
        for N in range(a.N_max + 1):
            x, y = a.g[n, N], b.g[n, N]
            if _is_zero(x) and _is_zero(y):
                continue
            diff = abs(x - y) / max(abs(x), abs(y))
            worst = max(worst, float(diff))
    return worst


# --------------------------------------------------------------------------
# Univariate operations


def _truncated_product(a: np.ndarray, b: np.ndarray, n_max: int, mode: str) -> np.ndarray:
    if mode == "float":
        return np.convolve(a[: n_max + 1], b[: n_max + 1])[: n_max + 1]
    out = _zeros(mode, n_max + 1)
    for k in range(n_max + 1):
        out[k] = np.dot(a[: k + 1], b[k::-1])
    return out


@_at_working_precision
def series_mul(a: CoeffVector, b: CoeffVector, n_max: int) -> CoeffVector:
    if a.mode != b.mode:
        raise ConfigError("cannot mix arithmetic modes")
    if a.scale != b.scale:
        raise ConfigError("cannot multiply vectors with different scales")
    return CoeffVector(_truncated_product(_pad(a, n_max), _pad(b, n_max), n_max, a.mode), a.mode, a.scale,
                       a.log_factor + b.log_factor)


def _pad(c: CoeffVector, n_max: int) -> np.ndarray:
    if len(c.coeffs) >= n_max + 1:
        return c.coeffs[: n_max + 1]
    out = _zeros(c.mode, n_max + 1)
    out[: len(c.coeffs)] = c.coeffs
    return out


@_at_working_precision
def series_pow(c: CoeffVector, N: int, n_max: int) -> CoeffVector:
    """Coefficients of C(x)^N up to x^n_max by repeated squaring of truncated products.

    Float vectors are renormalized after every product; the scale is carried
    in ``log_factor`` so large powers do not overflow.
    """
    if N < 0:
        raise DomainError("power must be non-negative")
    mode = c.mode
    base = _pad(c, n_max)
    base_log = c.log_factor
    result = _zeros(mode, n_max + 1)
    result[0] = _one(mode)
    log_factor = 0.0

    def renorm(v, lf):
        if mode != "float":
            return v, lf
        top = float(np.max(np.abs(v)))
        if top == 0 or not math.isfinite(top):
            return v, lf
        return v / top, lf + math.log(top)

    base, base_log = renorm(base, base_log)
    while N:
        if N & 1:
            result, log_factor = renorm(_truncated_product(result, base, n_max, mode), log_factor + base_log)
        N >>= 1
        if N:
            base, base_log = renorm(_truncated_product(base, base, n_max, mode), 2 * base_log)
    if mode == "float" and not np.all(np.isfinite(result)):
        raise PrecisionError("power overflowed double precision")
    return CoeffVector(result, mode, c.scale, log_factor)


@_at_working_precision
def series_exp(c: CoeffVector, n_max: int) -> CoeffVector:
    """exp(C(x)) by the recurrence k e_k = sum_i i c_i e_{k-i}."""
    coeffs = _pad(c, n_max)
    if not _is_zero(coeffs[0]):
        raise DomainError("series_exp needs a zero constant term")
    if c.log_factor != 0.0:
        raise DomainError("series_exp needs an unnormalized input vector")
    mode = c.mode
    ic = coeffs * np.arange(n_max + 1) if mode == "float" else np.array(
        [k * coeffs[k] for k in range(n_max + 1)], dtype=object)
    e = _zeros(mode, n_max + 1)
    e[0] = _one(mode)
    for k in range(1, n_max + 1):
        e[k] = np.dot(ic[1: k + 1], e[k - 1:: -1]) / k
    if mode == "float" and not np.all(np.isfinite(e)):
        raise PrecisionError("exp overflowed double precision")
    return CoeffVector(e, mode, c.scale)


@_at_working_precision
def euler_transform(c: CoeffVector, n_max: int) -> CoeffVector:
    """Coefficients of G(x, 1) = prod_k (1 - x^k)^(-c_k) (univariate multiset transform)."""
    coeffs = _prepare(c, n_max)
    mode = c.mode
    r = c.scale
    sigma = _zeros(mode, n_max + 1)
    for d in range(1, n_max + 1):
        cd = coeffs[d]
        if _is_zero(cd):
            continue
        ks = np.arange(d, n_max + 1, d)
        if mode == "float":
            sigma[ks] += d * cd * np.exp((ks - d) * math.log(r))
        else:
            for k in ks:
                sigma[k] += d * cd
    g = _zeros(mode, n_max + 1)
    g[0] = _one(mode)
    for n in range(1, n_max + 1):
        g[n] = np.dot(sigma[1: n + 1], g[n - 1:: -1]) / n
    if mode == "float" and not np.all(np.isfinite(g)):
        raise PrecisionError("Euler transform overflowed double precision")
    return CoeffVector(g, mode, r)


# --------------------------------------------------------------------------
# Cached float tables for comparisons with asymptotic formulas


@functools.lru_cache(maxsize=16)
def float_table(spec: ExpansiveSpec, n_max: int, N_max: int) -> BivariateTable:
    c = build_C(spec, n_max, mode="float")
    return mset_exp_transform(c, n_max, N_max, y_scale=spec.r ** (-spec.m))


@functools.lru_cache(maxsize=16)
def float_gn(spec: ExpansiveSpec, n_max: int) -> CoeffVector:
    return euler_transform(build_C(spec, n_max, mode="float"), n_max)


def log_gnN(spec: ExpansiveSpec, n: int, N: int) -> float:
    """log [x^n y^N] G(x, y) from a rescaled float64 table."""
    return float_table(spec, n, N).log_value(n, N)


def log_gn(spec: ExpansiveSpec, n: int) -> float:
    return float_gn(spec, n).log_value(n)


def format_value(v, mode: str) -> str:
    if mode == "exact":
        return str(v)
    if isinstance(v, mpmath.mpf):
        return mpmath.nstr(v, max(17, int(get_precision() * 0.30103) + 2), strip_zeros=False)
    return repr(float(v))


def table_to_csv(table: BivariateTable) -> str:
    lines = ["n,N,g"]
    for n, N, v in table.nonzero():
        lines.append(f"{n},{N},{format_value(v, table.mode)}")
    return "\n".join(lines) + "\n"
