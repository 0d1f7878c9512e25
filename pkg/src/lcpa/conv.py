"""Parity convolution kernels.

Two backends compute ``(sum_{i+j=t} a[i] b[j]) mod 2``:

* a real FFT in single or double precision, rounding the inverse transform
  to the nearest integer and refusing results whose worst distance from an
  integer reaches the policy's round guard;
* an exact number-theoretic transform modulo the prime
  ``3 * 2**30 + 1`` (primitive root 5).  Convolution counts never exceed
  ``min(len(a), len(b)) < 2**27`` so residues equal true counts.

Kernels work on 2-D arrays of unpacked bits (one row per independent
convolution) so many small products can share one vectorised transform.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .bitvec import BitString
from .errors import PAError, ParameterError, PlanError, PrecisionExceededError

NTT_PRIME = 3 * 2**30 + 1
NTT_ROOT = 5
MAX_EXACT_TRANSFORM = 1 << 27

_MODE_LIMITS = {"single": 1 << 23, "double": 1 << 26, "exact": 1 << 26}
_MODE_DEFAULTS = {"single": 4 << 20, "double": 1 << 26, "exact": 1 << 26}
_FLOAT_DTYPES = {"single": np.float32, "double": np.float64}


def default_workers() -> int:
    env = os.environ.get("LCPA_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError(f"LCPA_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PrecisionPolicy:
    """Backend choice and size limits.

    ``max_batch_bits`` bounds the input span of one batch; a transform may be
    up to twice that long, so the single-precision default of 4 Mibit keeps
    transforms at or below 2**23 points.
    """

    mode: str = "double"
    max_batch_bits: int | None = None
    round_guard: float = 0.25

    def __post_init__(self):
        if self.mode not in _MODE_LIMITS:
            raise ParameterError(f"unknown precision mode {self.mode!r}")
        if self.max_batch_bits is None:
            object.__setattr__(self, "max_batch_bits", _MODE_DEFAULTS[self.mode])
        if not 1 <= self.max_batch_bits <= _MODE_LIMITS[self.mode]:
            raise ParameterError(
                f"max_batch_bits={self.max_batch_bits} outside [1, {_MODE_LIMITS[self.mode]}] for {self.mode}"
            )
        if not 0.0 < self.round_guard < 0.5:
            raise ParameterError(f"round_guard must lie in (0, 0.5), got {self.round_guard}")

    @property
    def transform_cap(self) -> int:
        return 2 * self.max_batch_bits

    def with_mode(self, mode: str) -> "PrecisionPolicy":
        return PrecisionPolicy(mode, min(self.max_batch_bits, _MODE_LIMITS[mode]), self.round_guard)


@dataclass(frozen=True)
class ConvResult:
    parities: BitString
    max_residual: float


def next_pow2(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


def transform_length(min_len: int, mode: str) -> int:
    """Cyclic length actually used: a power of two for the NTT, otherwise the
    next length with only small prime factors (at most the power of two)."""
    if mode == "exact":
        return next_pow2(min_len)
    return sfft.next_fast_len(max(1, min_len), real=True)


def _window_min_length(len_a: int, len_b: int, start: int, length: int) -> int:
    return max(start + length, len_a + len_b - 1 - start, len_a, len_b, 1)


def window_transform_size(len_a: int, len_b: int, start: int, length: int) -> int:
    """Smallest power-of-two cyclic length whose aliasing misses the window.

    Output ``t`` of a cyclic convolution of length N collects linear outputs
    ``t`` and ``t +- N``; the window is clean when ``start + length <= N``
    and ``len_a + len_b - 1 - start <= N``.  Both operands must also fit.
    """
    return next_pow2(_window_min_length(len_a, len_b, start, length))


# float backend


def _float_window(a: np.ndarray, b: np.ndarray, size: int, start: int, length: int, dtype):
    fa = sfft.rfft(a.astype(dtype, copy=False), n=size, axis=-1)
    fb = sfft.rfft(b.astype(dtype, copy=False), n=size, axis=-1)
    fa *= fb
    del fb
    out = sfft.irfft(fa, n=size, axis=-1, overwrite_x=True)[..., start:start + length]
    del fa
    rounded = np.rint(out)
    np.subtract(out, rounded, out=out)
    residual = float(np.max(np.abs(out, out=out))) if out.size else 0.0
    # counts never exceed the transform length, which is far below 2**31
    parities = (rounded.astype(np.int32) & 1).astype(np.uint8)
    return parities, residual


# exact backend


@lru_cache(maxsize=4)
def _root_powers(size: int, inverse: bool) -> np.ndarray:
    """Powers ``w**j`` for ``j < size // 2`` of a primitive size-th root."""
    p = NTT_PRIME
    w = pow(NTT_ROOT, (p - 1) // size, p)
    if inverse:
        w = pow(w, p - 2, p)
    half = max(1, size // 2)
    out = np.ones(1, dtype=np.uint64)
    while out.size < half:
        step = np.uint64(pow(w, out.size, p))
        out = np.concatenate([out, out * step % np.uint64(p)])
    out = out[:half]
    out.setflags(write=False)
    return out


def _ntt_forward(x: np.ndarray) -> np.ndarray:
    """In-place decimation-in-frequency NTT; output is in bit-reversed order."""
    rows, size = x.shape
    p = np.uint64(NTT_PRIME)
    roots = _root_powers(size, False)
    h = size // 2
    while h >= 1:
        y = x.reshape(rows, size // (2 * h), 2, h)
        a, b = y[:, :, 0, :], y[:, :, 1, :]
        tw = roots[:: size // (2 * h)][:h]
        s = a + b
        np.minimum(s, s - p, out=s)
        d = a + p
        d -= b
        np.minimum(d, d - p, out=d)
        d *= tw
        d %= p
        y[:, :, 0, :] = s
        y[:, :, 1, :] = d
        h //= 2
    return x


def _ntt_inverse(x: np.ndarray) -> np.ndarray:
    """In-place decimation-in-time inverse taking bit-reversed input."""
    rows, size = x.shape
    p = np.uint64(NTT_PRIME)
    roots = _root_powers(size, True)
    h = 1
    while h < size:
        y = x.reshape(rows, size // (2 * h), 2, h)
        a, b = y[:, :, 0, :], y[:, :, 1, :]
        tw = roots[:: size // (2 * h)][:h]
        t = b * tw
        t %= p
        d = a + p
        d -= t
        np.minimum(d, d - p, out=d)
        t += a
        np.minimum(t, t - p, out=t)
        y[:, :, 0, :] = t
        y[:, :, 1, :] = d
        h *= 2
    x *= np.uint64(pow(size, NTT_PRIME - 2, NTT_PRIME))
    x %= p
    return x


def _pad_u64(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((a.shape[0], size), dtype=np.uint64)
    out[:, : a.shape[1]] = a
    return out


def _exact_window(a: np.ndarray, b: np.ndarray, size: int, start: int, length: int):
    fa = _ntt_forward(_pad_u64(a, size))
    fb = _ntt_forward(_pad_u64(b, size))
    fa *= fb
    del fb
    fa %= np.uint64(NTT_PRIME)
    counts = _ntt_inverse(fa)[:, start:start + length]
    return (counts & np.uint64(1)).astype(np.uint8), 0.0


def window_parity_rows(
    a: np.ndarray, b: np.ndarray, start: int, length: int, mode: str, size: int | None = None
) -> tuple[np.ndarray, float]:
    """Parities of linear-convolution outputs ``[start, start + length)`` per row.

    ``a`` and ``b`` are uint8 arrays of 0/1 with shapes (rows, la) and
    (rows, lb), or 1-D.  No size or residual checks happen here.
    """
    flat = a.ndim == 1
    a2 = np.atleast_2d(a)
    b2 = np.atleast_2d(b)
    if size is None:
        size = transform_length(_window_min_length(a2.shape[1], b2.shape[1], start, length), mode)
    if mode == "exact":
        par, res = _exact_window(a2, b2, size, start, length)
    else:
        par, res = _float_window(a2, b2, size, start, length, _FLOAT_DTYPES[mode])
    return (par[0] if flat else par), res


# BitString-level API


def _check_inputs(a: BitString, b: BitString) -> None:
    if a.length == 0 or b.length == 0:
        raise ParameterError("convolution operands must be non-empty")


def conv_parity_window(
    a: BitString, b: BitString, start: int, length: int, policy: PrecisionPolicy
) -> ConvResult:
    """Parities of outputs ``[start, start + length)`` using a cyclic transform
    just large enough to keep that window free of wrap-around."""
    _check_inputs(a, b)
    full = a.length + b.length - 1
    if start < 0 or length < 0 or start + length > full:
        raise ParameterError(f"window [{start}, {start + length}) outside convolution of length {full}")
    size = window_transform_size(a.length, b.length, start, length)
    cap = MAX_EXACT_TRANSFORM if policy.mode == "exact" else policy.transform_cap
    if size > cap:
        raise PlanError(f"transform of {size} points exceeds the {policy.mode} cap of {cap}")
    par, residual = window_parity_rows(a.to_bits(), b.to_bits(), start, length, policy.mode)
    if residual >= policy.round_guard:
        raise PrecisionExceededError(residual, policy.round_guard, policy.mode)
    return ConvResult(BitString.from_bits(par), residual)


def conv_parity_float(a: BitString, b: BitString, policy: PrecisionPolicy) -> ConvResult:
    if policy.mode not in _FLOAT_DTYPES:
        raise ParameterError(f"float path needs mode single or double, got {policy.mode!r}")
    _check_inputs(a, b)
    return conv_parity_window(a, b, 0, a.length + b.length - 1, policy)


def conv_parity_exact(a: BitString, b: BitString) -> ConvResult:
    _check_inputs(a, b)
    full = a.length + b.length - 1
    if full > MAX_EXACT_TRANSFORM:
        raise PlanError(f"exact convolution of length {full} exceeds {MAX_EXACT_TRANSFORM}")
    size = next_pow2(full)
    par, _ = window_parity_rows(a.to_bits(), b.to_bits(), 0, full, "exact", size)
    return ConvResult(BitString.from_bits(par), 0.0)


def conv_parity(a: BitString, b: BitString, policy: PrecisionPolicy) -> ConvResult:
    if policy.mode == "exact":
        return conv_parity_exact(a, b)
    return conv_parity_float(a, b, policy)


def batch_conv_parity(
    pairs: Sequence[tuple[BitString, BitString]],
    policy: PrecisionPolicy,
    workers: int | None = None,
) -> list[ConvResult]:
    """Map :func:`conv_parity` over ``pairs``; results keep input order."""
    pairs = list(pairs)
    workers = min(workers or default_workers(), max(1, len(pairs)))

    def run(item):
        idx, (a, b) = item
        try:
            return conv_parity(a, b, policy)
        except PAError as exc:
            raise exc.at(f"pair {idx}")

    if workers == 1:
        return [run(item) for item in enumerate(pairs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, enumerate(pairs)))
