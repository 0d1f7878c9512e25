"""Reference Toeplitz hashing.

The n x l matrix is laid out as ``T[row, col] = seed[col - row + n - 1]``:
seed bits ``0 .. n-1`` run up the first column from the bottom and bits
``n-1 .. n+l-2`` run along the first row.  Row ``i`` is therefore the seed
window ``[n-1-i, n-1-i+l)``, and ``u @ T`` is the middle window of the
linear convolution of ``u`` with the seed.

Nothing here is optimised with transforms; it exists to be trusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitvec import BitString
from .errors import BitRangeError, ParameterError, ShapeError


@dataclass(frozen=True)
class ToeplitzSeed:
    seed: BitString
    n: int
    l: int  # noqa: E741

    def __post_init__(self):
        if self.n < 1 or self.l < 1:
            raise ParameterError(f"Toeplitz dimensions must be positive, got n={self.n}, l={self.l}")
        if self.seed.length != self.n + self.l - 1:
            raise ShapeError(
                f"seed has {self.seed.length} bits, an {self.n}x{self.l} matrix needs {self.n + self.l - 1}"
            )

    @classmethod
    def for_input(cls, seed: BitString, n: int) -> "ToeplitzSeed":
        """Infer the output length from the seed length."""
        return cls(seed, n, seed.length - n + 1)


def toeplitz_entry(seed: ToeplitzSeed, row: int, col: int) -> int:
    if not (0 <= row < seed.n and 0 <= col < seed.l):
        raise BitRangeError(f"entry ({row}, {col}) outside {seed.n}x{seed.l} matrix")
    return seed.seed[col - row + seed.n - 1]


def toeplitz_matrix(seed: ToeplitzSeed) -> np.ndarray:
    """Dense uint8 matrix. Only sensible for small dimensions."""
    bits = seed.seed.to_bits()
    rows = np.arange(seed.n)[:, None]
    cols = np.arange(seed.l)[None, :]
    return bits[cols - rows + seed.n - 1]


def hash_direct(u: BitString, seed: ToeplitzSeed) -> BitString:
    """``r = u T (mod 2)`` as the XOR of the rows selected by ``u``."""
    if u.length != seed.n:
        raise ShapeError(f"input has {u.length} bits but the matrix expects {seed.n}")
    n = seed.n
    s = seed.seed.to_int()
    acc = 0
    for i in np.flatnonzero(u.to_bits()).tolist():
        acc ^= s >> (n - 1 - i)
    return BitString.from_int(acc & ((1 << seed.l) - 1), seed.l)


def hash_schoolbook(u: BitString, seed: ToeplitzSeed) -> BitString:
    """Dense matrix product mod 2; a second, independent reference for small sizes."""
    if u.length != seed.n:
        raise ShapeError(f"input has {u.length} bits but the matrix expects {seed.n}")
    prod = u.to_bits().astype(np.int64) @ toeplitz_matrix(seed).astype(np.int64)
    return BitString.from_bits(prod & 1)
