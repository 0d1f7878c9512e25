"""Finite-size security bookkeeping: penalty term, key rate, output length
and the Toeplitz collision bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class FiniteSizeParams:
    """Inputs of the finite-size penalty.

    dim_hx: dimension of the Hilbert space of the raw key.
    eps_bar: smoothing parameter.
    eps_pa: privacy amplification failure probability.
    n: input block length in bits.
    """

    dim_hx: int
    eps_bar: float
    eps_pa: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.dim_hx, (int, np.integer)) and self.dim_hx >= 1):
            raise ParameterError(f"dim_hx must be a positive integer, got {self.dim_hx!r}")
        for name in ("eps_bar", "eps_pa"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {v!r}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")


@dataclass(frozen=True)
class KeyRateResult:
    beta: float
    i_xy: float
    s_ye: float
    delta_n: float
    k: float
    l: int  # noqa: E741


def compute_delta(params: FiniteSizeParams) -> float:
    ld = np.longdouble
    n = ld(params.n)
    first = ld(2 * params.dim_hx + 3) * np.sqrt(np.log2(ld(2) / ld(params.eps_bar)) / n)
    second = ld(2) / n * np.log2(ld(1) / ld(params.eps_pa))
    return float(first + second)


def compute_key_rate(beta: float, i_xy: float, s_ye: float, delta_n: float) -> float:
    """Secret key rate in bits per symbol. Negative values mean no key."""
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must lie in (0, 1], got {beta!r}")
    for name, v in (("i_xy", i_xy), ("s_ye", s_ye), ("delta_n", delta_n)):
        if not v >= 0.0:
            raise ParameterError(f"{name} must be non-negative, got {v!r}")
    return float(np.longdouble(beta) * np.longdouble(i_xy) - np.longdouble(s_ye) - np.longdouble(delta_n))


def output_length(n: int, k: float) -> int:
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if k <= 0:
        return 0
    return max(0, math.floor(n * k))


def key_rate_result(params: FiniteSizeParams, beta: float, i_xy: float, s_ye: float) -> KeyRateResult:
    delta = compute_delta(params)
    k = compute_key_rate(beta, i_xy, s_ye, delta)
    return KeyRateResult(beta, i_xy, s_ye, delta, k, output_length(params.n, k))


@dataclass(frozen=True)
class CollisionBound:
    """``n * 2**(1 - m)`` held as ``2**(exponent + frac)`` with ``0 <= frac < 1``.

    Keeping the integer exponent separate makes ``m -> m + 1`` an exact
    halving regardless of magnitude.
    """

    exponent: int
    frac: float

    @property
    def log2(self) -> float:
        return self.exponent + self.frac

    @property
    def value(self) -> float:
        # underflows to 0.0 for large m; use log2 there
        try:
            return math.ldexp(2.0 ** self.frac, self.exponent)
        except OverflowError:
            return math.inf


def collision_probability(n: int, m: int) -> CollisionBound:
    if n < 1 or m < 1:
        raise ParameterError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    int_part = n.bit_length() - 1
    frac = math.log2(n / (1 << int_part)) if n & (n - 1) else 0.0
    if frac >= 1.0:
        int_part, frac = int_part + 1, 0.0
    return CollisionBound(exponent=int_part + 1 - m, frac=frac)


def smallest_n_with_key(
    dim_hx: int, eps_bar: float, eps_pa: float, beta: float, i_xy: float, s_ye: float,
    n_max: int = 1 << 62,
) -> int | None:
    """Smallest block length whose key rate is positive, or None if none exists."""

    def rate(n: int) -> float:
        return compute_key_rate(beta, i_xy, s_ye, compute_delta(FiniteSizeParams(dim_hx, eps_bar, eps_pa, n)))

    if beta * i_xy - s_ye <= 0 or rate(n_max) <= 0:
        return None
    lo, hi = 1, n_max
    if rate(lo) > 0:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi
