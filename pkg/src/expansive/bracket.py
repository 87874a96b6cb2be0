"""Bisection for monotone scalar equations with a certified sign-change bracket."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import DomainError

_EXPANSION_STEPS = 200


@dataclass(frozen=True)
class BisectResult:
    root: float
    lo: float
    hi: float
    residual: float
    iterations: int


def bisect_increasing(f: Callable[[float], float], lo: float, hi: float, *,
                      ftol: float = 0.0, xtol: float = 0.0, max_iter: int = 500,
                      f_lo: float | None = None, f_hi: float | None = None) -> BisectResult:
    """Root of an increasing function on [lo, hi].

    ``f(lo) < 0 < f(hi)`` must hold (``inf``/``-inf`` are accepted as signs).
    Stops when ``|f(mid)| <= ftol``, when ``hi - lo <= xtol`` or when the
    interval can no longer be split in double precision.  The returned
    ``root`` is the evaluated point with the smallest ``|f|``.
    """
    f_lo = f(lo) if f_lo is None else f_lo
    f_hi = f(hi) if f_hi is None else f_hi
    if not (f_lo <= 0 <= f_hi):
        raise DomainError(f"no sign change on [{lo!r}, {hi!r}]: f(lo)={f_lo!r}, f(hi)={f_hi!r}")
    if f_lo == 0:
        return BisectResult(lo, lo, lo, 0.0, 0)
    if f_hi == 0:
        return BisectResult(hi, hi, hi, 0.0, 0)
    best, best_val = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = f(mid)
        if math.isnan(val):
            raise DomainError(f"function undefined at {mid!r}")
        if abs(val) < abs(best_val):
            best, best_val = mid, val
        if abs(val) <= ftol:
            return BisectResult(mid, lo, hi, val, it)
        if val < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol:
            break
    return BisectResult(best, lo, hi, best_val, it)


def expand_bracket(f: Callable[[float], float], t0: float, step: float = 1.0, *,
                   t_min: float = -math.inf, t_max: float = math.inf, max_step: float = math.inf):
    """Walk outwards from t0 until an increasing f changes sign.

    Returns ``(lo, hi, f_lo, f_hi)`` with ``f_lo <= 0 <= f_hi``.  The step
    doubles after every unsuccessful move, up to ``max_step``.
    """
    v0 = f(t0)
    if v0 == 0:
        return t0, t0, v0, v0
    if v0 > 0:
        hi, f_hi = t0, v0
        lo, d = t0, step
        for _ in range(_EXPANSION_STEPS):
            lo = max(hi - d, t_min)
            f_lo = f(lo)
            if f_lo <= 0:
                return lo, hi, f_lo, f_hi
            if lo <= t_min:
                break
            hi, f_hi, d = lo, f_lo, min(2 * d, max_step)
        raise DomainError(f"no sign change below t={t0!r}; f({lo!r})={f_lo!r} > 0")
    lo, f_lo = t0, v0
    hi, d = t0, step
    for _ in range(_EXPANSION_STEPS):
        hi = min(lo + d, t_max)
        f_hi = f(hi)
        if f_hi >= 0:
            return lo, hi, f_lo, f_hi
        if hi >= t_max:
            break
        lo, f_lo, d = hi, f_hi, min(2 * d, max_step)
    raise DomainError(f"no sign change above t={t0!r}; f({hi!r})={f_hi!r} < 0")
