"""Expansive weight sequences c_n = h(n) n^(alpha-1) rho^(-n).

The slowly varying factor ``h`` comes from a small closed family so that every
model is serializable and reproducible.  Reals entering a model are stored as
``Fraction`` (floats are read through their shortest repr, so ``0.3`` becomes
``3/10``); this is what makes the exact arithmetic mode possible.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import mpmath
import numpy as np

from .errors import ConfigError, DomainError, PrecisionError

Real = Union[int, float, str, Fraction]

DEFAULT_PRECISION = 128
_precision = contextvars.ContextVar("expansive_precision", default=DEFAULT_PRECISION)


def get_precision() -> int:
    return _precision.get()


@contextlib.contextmanager
def working_precision(bits: int):
    """Set the mantissa width (bits) used by the ``mp`` arithmetic mode."""
    if bits < 53:
        raise ConfigError(f"precision must be at least 53 bits, got {bits}")
    token = _precision.set(int(bits))
    try:
        yield
    finally:
        _precision.reset(token)


def to_fraction(value: Real) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigError("booleans are not reals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError(f"non-finite real {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse real {value!r}") from exc
    raise ConfigError(f"unsupported real type {type(value).__name__}")


def format_fraction(q: Fraction) -> str:
    """Decimal string when the expansion terminates, ``p/q`` otherwise."""
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(q.numerator)
    scaled = abs(q.numerator) * 10**digits // q.denominator
    sign = "-" if q < 0 else ""
    text = str(scaled).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


# --------------------------------------------------------------------------
# Slowly varying functions


def _mpq(q: Fraction):
    return mpmath.mpf(q.numerator) / q.denominator


def _clamped_log(x):
    return math.log(max(x, math.e))


def _clamped_loglog(x):
    return math.log(math.log(max(x, math.e**math.e)))


@dataclass(frozen=True)
class Constant:
    c: Fraction = Fraction(1)
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "c", to_fraction(self.c))
        if self.c <= 0:
            raise ConfigError("Constant slowly varying factor must be positive")

    def __call__(self, x: float) -> float:
        return float(self.c)

    def eval_mp(self, x):
        return mpmath.mpf(self.c.numerator) / self.c.denominator

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), float(self.c))

    def exact_value(self) -> Fraction | None:
        return self.c

    def ratio_bound(self, j: int) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"c": format_fraction(self.c)}}


@dataclass(frozen=True)
class LogPower:
    """h(x) = ln(max(x, e))**beta."""

    beta: Fraction = Fraction(1)
    kind = "log_power"

    def __post_init__(self):
        object.__setattr__(self, "beta", to_fraction(self.beta))

    def __call__(self, x: float) -> float:
        return _clamped_log(x) ** float(self.beta)

    def eval_mp(self, x):
        x = mpmath.mpf(x)
        return mpmath.log(max(x, mpmath.e)) ** _mpq(self.beta)

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        return np.log(np.maximum(np.asarray(x, dtype=float), math.e)) ** float(self.beta)

    def exact_value(self) -> Fraction | None:
        return Fraction(1) if self.beta == 0 else None

    def ratio_bound(self, j: int) -> float:
        # sup_{i >= j} h(i+1)/h(i); log(i+1)/log(i) decreases once i >= 3
        if self.beta <= 0:
            return 1.0
        b = float(self.beta)
        return max((_clamped_log(i + 1) / _clamped_log(i)) ** b for i in range(j, max(j, 3) + 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"beta": format_fraction(self.beta)}}


@dataclass(frozen=True)
class LogLogPower:
    """h(x) = ln(ln(max(x, e^e)))**beta."""

    beta: Fraction = Fraction(1)
    kind = "loglog_power"

    def __post_init__(self):
        object.__setattr__(self, "beta", to_fraction(self.beta))

    def __call__(self, x: float) -> float:
        return _clamped_loglog(x) ** float(self.beta)

    def eval_mp(self, x):
        x = mpmath.mpf(x)
        return mpmath.log(mpmath.log(max(x, mpmath.e**mpmath.e))) ** _mpq(self.beta)

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.maximum(np.asarray(x, dtype=float), math.e**math.e)
        return np.log(np.log(x)) ** float(self.beta)

    def exact_value(self) -> Fraction | None:
        return Fraction(1) if self.beta == 0 else None

    def ratio_bound(self, j: int) -> float:
        if self.beta <= 0:
            return 1.0
        b = float(self.beta)
        return max((_clamped_loglog(i + 1) / _clamped_loglog(i)) ** b for i in range(j, max(j, 16) + 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"beta": format_fraction(self.beta)}}


@dataclass(frozen=True)
class Product:
    factors: tuple = ()
    kind = "product"

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ConfigError("Product needs at least one factor")

    def __call__(self, x: float) -> float:
        return math.prod(f(x) for f in self.factors)

    def eval_mp(self, x):
        out = mpmath.mpf(1)
        for f in self.factors:
            out *= f.eval_mp(x)
        return out

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        out = np.ones(np.shape(x))
        for f in self.factors:
            out = out * f.eval_array(x)
        return out

    def exact_value(self) -> Fraction | None:
        vals = [f.exact_value() for f in self.factors]
        if any(v is None for v in vals):
            return None
        return math.prod(vals, start=Fraction(1))

    def ratio_bound(self, j: int) -> float:
        return math.prod(f.ratio_bound(j) for f in self.factors)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"factors": [f.to_dict() for f in self.factors]}}


SlowlyVarying = Union[Constant, LogPower, LogLogPower, Product]

_SV_KINDS = {"constant": Constant, "log_power": LogPower, "loglog_power": LogLogPower}


def sv_from_dict(doc: dict) -> SlowlyVarying:
    try:
        kind = doc["kind"]
        params = doc.get("params", {})
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed slowly varying function {doc!r}") from exc
    if kind == "product":
        return Product(tuple(sv_from_dict(f) for f in params.get("factors", [])))
    if kind not in _SV_KINDS:
        raise ConfigError(f"unknown slowly varying kind {kind!r}")
    try:
        return _SV_KINDS[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {params!r}") from exc


# --------------------------------------------------------------------------
# The model


@dataclass(frozen=True)
class ExpansiveSpec:
    alpha: Fraction
    rho: Fraction
    h: SlowlyVarying = field(default_factory=Constant)
    m: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", to_fraction(self.alpha))
        object.__setattr__(self, "rho", to_fraction(self.rho))
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m must be a positive integer")
        object.__setattr__(self, "m", int(self.m))

    @property
    def a(self) -> float:
        return float(self.alpha)

    @property
    def r(self) -> float:
        return float(self.rho)

    @property
    def is_exact(self) -> bool:
        """True when every c_n is rational (integer alpha, rational h)."""
        return self.alpha.denominator == 1 and self.h.exact_value() is not None

    @property
    def c_m(self) -> float:
        return float(coeff_c(self, self.m, mode="mp"))

    def h_at(self, x: float) -> float:
        return self.h(x)

    def to_dict(self) -> dict:
        return {
            "alpha": format_fraction(self.alpha),
            "rho": format_fraction(self.rho),
            "m": self.m,
            "h": self.h.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExpansiveSpec":
        if not isinstance(doc, dict):
            raise ConfigError("spec must be a mapping")
        extra = set(doc) - {"alpha", "rho", "m", "h"}
        if extra:
            raise ConfigError(f"unknown spec keys {sorted(extra)}")
        try:
            return cls(
                alpha=doc["alpha"],
                rho=doc["rho"],
                h=sv_from_dict(doc.get("h", {"kind": "constant", "params": {"c": "1"}})),
                m=doc.get("m", 1),
            )
        except KeyError as exc:
            raise ConfigError(f"spec is missing {exc}") from exc


def resolve_mode(spec: ExpansiveSpec, mode: str) -> str:
    if mode == "auto":
        return "exact" if spec.is_exact else "mp"
    if mode == "exact" and not spec.is_exact:
        raise ConfigError("exact mode needs an integer alpha and a rational h")
    if mode not in ("exact", "mp", "float"):
        raise ConfigError(f"unknown arithmetic mode {mode!r}")
    return mode


def coeff_c(spec: ExpansiveSpec, n: int, mode: str = "auto"):
    """c_n in the requested arithmetic mode (0 below the threshold m)."""
    if n < 1:
        raise DomainError("coefficients are indexed from 1")
    mode = resolve_mode(spec, mode)
    if mode == "exact":
        if n < spec.m:
            return Fraction(0)
        return spec.h.exact_value() * Fraction(n) ** (spec.alpha.numerator - 1) / spec.rho**n
    if mode == "mp":
        with mpmath.workprec(get_precision()):
            if n < spec.m:
                return mpmath.mpf(0)
            rho = mpmath.mpf(spec.rho.numerator) / spec.rho.denominator
            alpha = mpmath.mpf(spec.alpha.numerator) / spec.alpha.denominator
            return spec.h.eval_mp(n) * mpmath.mpf(n) ** (alpha - 1) * rho ** (-n)
    if n < spec.m:
        return 0.0
    log_c = math.log(spec.h(n)) + (spec.a - 1) * math.log(n) - n * math.log(spec.r)
    if log_c > 709.0:
        raise PrecisionError(f"c_{n} overflows double precision (log c_n = {log_c:.1f})")
    return spec.h(n) * n ** (spec.a - 1) / spec.r**n


def weights(spec: ExpansiveSpec, n_max: int) -> np.ndarray:
    """Normalized coefficients w_k = c_k rho^k = h(k) k^(alpha-1), zero below m."""
    k = np.arange(n_max + 1, dtype=float)
    w = np.zeros(n_max + 1)
    if n_max >= spec.m:
        kk = k[spec.m:]
        w[spec.m:] = spec.h.eval_array(kk) * kk ** (spec.a - 1)
    return w


# --------------------------------------------------------------------------
# Numeric checks of slow variation


@dataclass
class SVCheckReport:
    grid: list = field(default_factory=list)       # (x, lambda, |h(lx)/h(x) - 1|)
    karamata: list = field(default_factory=list)   # (x, r(x))
    subpoly_ok: dict = field(default_factory=dict)  # delta -> [bool per grid point]


def karamata_ratios(spec: ExpansiveSpec, x_grid: Sequence[int]) -> list[tuple[int, float]]:
    grid = [int(x) for x in x_grid]
    if any(x < spec.m + 1 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("Karamata grid must be increasing with entries >= m + 1")
    rows = []
    partial = []
    start = spec.m
    for x in grid:
        s = np.arange(start, x, dtype=float)
        partial.append(float(np.sum(spec.h.eval_array(s) * s ** (spec.a - 1))))
        start = x
        total = math.fsum(partial)
        rows.append((x, total / (spec.h(x) * x**spec.a / spec.a)))
    return rows


def karamata_check(spec: ExpansiveSpec, x_grid: Sequence[int]) -> SVCheckReport:
    return SVCheckReport(karamata=karamata_ratios(spec, x_grid))


def subpoly_check(h: SlowlyVarying, delta: float, x_grid: Iterable[float]) -> list[bool]:
    grid = [float(x) for x in x_grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("subpoly grid must be increasing with at least two points")
    return [x ** (-delta) <= h(x) <= x**delta for x in grid]


def slow_variation_deviation(h: SlowlyVarying, x_grid, lambdas=(0.5, 2.0, 10.0)):
    return [(float(x), lam, abs(h(lam * x) / h(x) - 1.0)) for lam in lambdas for x in x_grid]


def sv_report(spec: ExpansiveSpec, x_grid: Sequence[int], deltas=(0.1,)) -> SVCheckReport:
    return SVCheckReport(
        grid=slow_variation_deviation(spec.h, x_grid),
        karamata=karamata_ratios(spec, x_grid),
        subpoly_ok={d: subpoly_check(spec.h, d, x_grid) for d in deltas},
    )
