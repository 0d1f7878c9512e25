"""Binary key file: ``b"PAK1"``, u64 little-endian bit count, packed bits."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .bitvec import BitString
from .errors import KeyFileError

MAGIC = b"PAK1"
HEADER = struct.Struct("<4sQ")


def write_key(path: str | Path, bits: BitString) -> None:
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, bits.length))
        fh.write(bits.packed.data)


def read_key(path: str | Path) -> BitString:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < HEADER.size:
        raise KeyFileError(f"truncated header ({raw.size} of {HEADER.size} bytes)", raw.size)
    magic, nbits = HEADER.unpack(raw[: HEADER.size].tobytes())
    if magic != MAGIC:
        raise KeyFileError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    body = raw[HEADER.size:]
    need = (nbits + 7) // 8
    if body.size < need:
        raise KeyFileError(f"body holds {body.size} bytes but header declares {nbits} bits", raw.size)
    if body.size > need:
        raise KeyFileError(f"{body.size - need} trailing bytes after {nbits} declared bits", HEADER.size + need)
    tail = nbits % 8
    if tail and body[-1] >> tail:
        raise KeyFileError("non-zero padding bits in final byte", raw.size - 1)
    return BitString(body, nbits, _owned=True)
