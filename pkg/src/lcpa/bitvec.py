"""Packed, immutable bit strings.

Bit ``b`` lives in byte ``b // 8`` at in-byte position ``b % 8`` (LSB first),
and unused high bits of the final byte are always zero, so equal bit
sequences always have equal byte representations.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import BitRangeError, ParameterError, ShapeError


def _nbytes(nbits: int) -> int:
    return (nbits + 7) // 8


class BitString:
    __slots__ = ("_data", "_length")

    def __init__(self, data: np.ndarray | bytes, length: int, *, _owned: bool = False):
        if isinstance(data, (bytes, bytearray, memoryview)):
            buf, _owned = np.frombuffer(bytes(data), dtype=np.uint8).copy(), True
        else:
            buf = data
        if length < 0:
            raise ParameterError(f"negative length {length}")
        if buf.dtype != np.uint8 or buf.ndim != 1 or buf.size != _nbytes(length):
            raise ShapeError(f"need {_nbytes(length)} packed bytes for {length} bits, got {buf.size}")
        if not _owned and buf.flags.writeable:
            buf = buf.copy()
        tail = length % 8
        if tail and buf[-1] >> tail:
            if not buf.flags.writeable:
                buf = buf.copy()
            buf[-1] &= (1 << tail) - 1
        buf.setflags(write=False)
        self._data = buf
        self._length = length

    # construction

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> "BitString":
        arr = np.asarray(bits if isinstance(bits, np.ndarray) else list(bits))
        if arr.size and (arr.ndim != 1 or not np.isin(arr, (0, 1)).all()):
            raise ParameterError("bits must be a flat sequence of 0/1")
        arr = arr.astype(np.uint8, copy=False)
        return cls(np.packbits(arr, bitorder="little"), int(arr.size), _owned=True)

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        """``"10110"`` reads left to right as bits 0, 1, 2, ..."""
        return cls.from_bits([int(c) for c in text if not c.isspace()])

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitString":
        if value < 0 or value >> length:
            raise ParameterError(f"value does not fit in {length} bits")
        return cls(value.to_bytes(_nbytes(length), "little"), length)

    @classmethod
    def from_bytes(cls, raw: bytes, length: int) -> "BitString":
        return cls(raw, length)

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(np.zeros(_nbytes(length), dtype=np.uint8), length, _owned=True)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "BitString":
        raw = rng.integers(0, 256, size=_nbytes(length), dtype=np.uint8)
        return cls(raw, length, _owned=True)

    # views

    def __len__(self) -> int:
        return self._length

    @property
    def length(self) -> int:
        return self._length

    @property
    def packed(self) -> np.ndarray:
        """Read-only packed byte array."""
        return self._data

    def to_bytes(self) -> bytes:
        return self._data.tobytes()

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(self._data, count=self._length, bitorder="little")

    def to_int(self) -> int:
        return int.from_bytes(self._data.tobytes(), "little")

    def count(self) -> int:
        return int(np.unpackbits(self._data).sum())

    def __getitem__(self, index: int) -> int:
        if not isinstance(index, (int, np.integer)):
            raise TypeError("use slice(s, offset, len) for ranges")
        if index < 0:
            index += self._length
        if not 0 <= index < self._length:
            raise BitRangeError(f"bit index {index} out of range for length {self._length}")
        return int(self._data[index >> 3] >> (index & 7)) & 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._length == other._length and np.array_equal(self._data, other._data)

    def __hash__(self) -> int:
        return hash((self._length, self._data.tobytes()))

    def __xor__(self, other: "BitString") -> "BitString":
        return xor_fold([self, other])

    def __repr__(self) -> str:
        if self._length <= 64:
            return f"BitString('{''.join(map(str, self.to_bits()))}')"
        return f"BitString(<{self._length} bits>)"

    def bit_unpacked_range(self, offset: int, length: int) -> np.ndarray:
        """Unpacked uint8 bits ``[offset, offset + length)`` without a full unpack."""
        _check_range(self, offset, length)
        lo = offset >> 3
        hi = _nbytes(offset + length)
        bits = np.unpackbits(self._data[lo:hi], bitorder="little")
        start = offset - 8 * lo
        return bits[start:start + length]


def _check_range(s: BitString, offset: int, length: int) -> None:
    if offset < 0 or length < 0 or offset + length > s.length:
        raise BitRangeError(
            f"slice offset={offset} len={length} exceeds string length {s.length}"
        )


def slice(s: BitString, offset: int, length: int) -> BitString:  # noqa: A001
    """Bits ``s[offset : offset + length]``."""
    _check_range(s, offset, length)
    if offset % 8 == 0:
        return BitString(s.packed[offset >> 3:(offset >> 3) + _nbytes(length)].copy(), length, _owned=True)
    bits = s.bit_unpacked_range(offset, length)
    return BitString(np.packbits(bits, bitorder="little"), length, _owned=True)


def zero_extend(s: BitString, new_len: int) -> BitString:
    if new_len < s.length:
        raise ParameterError(f"cannot zero-extend {s.length} bits down to {new_len}")
    buf = np.zeros(_nbytes(new_len), dtype=np.uint8)
    buf[: s.packed.size] = s.packed
    return BitString(buf, new_len, _owned=True)


def xor_fold(vs: Sequence[BitString]) -> BitString:
    """Bitwise XOR of equally long strings."""
    vs = list(vs)
    if not vs:
        raise ParameterError("xor_fold needs at least one string")
    n = vs[0].length
    acc = vs[0].packed.copy()
    for v in vs[1:]:
        if v.length != n:
            raise ShapeError(f"xor_fold length mismatch: {n} vs {v.length}")
        np.bitwise_xor(acc, v.packed, out=acc)
    return BitString(acc, n, _owned=True)


def concat(parts: Sequence[BitString]) -> BitString:
    if not parts:
        return BitString.zeros(0)
    return BitString.from_bits(np.concatenate([p.to_bits() for p in parts]))
