"""Length-compatible Toeplitz hashing.

The input is cut into ``p`` blocks of ``q`` batches each.  A batch covering
input bits ``[s, s + m)`` only touches rows ``s .. s+m-1`` of the Toeplitz
matrix, which form an ``m x l`` Toeplitz matrix over the seed window
``[n - s - m, n - s + l - 1)``.  Each batch yields an l-bit intermediate
key; XOR of all intermediate keys is the full hash.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .bitvec import BitString
from .conv import (
    MAX_EXACT_TRANSFORM,
    PrecisionPolicy,
    default_workers,
    next_pow2,
    transform_length,
    window_parity_rows,
)
from .errors import InfeasiblePlanError, PAError, ParameterError, PrecisionExceededError, ShapeError
from .toeplitz import ToeplitzSeed

# Working-set bytes per transform point: inputs, spectra and rounded output.
_BYTES_PER_POINT = {"single": 24, "double": 48, "exact": 48}

DEFAULT_BUDGET = 2 << 30


@dataclass(frozen=True)
class PartitionPlan:
    n: int
    l: int  # noqa: E741
    p: int
    q: int
    block_extents: tuple[tuple[int, int], ...]
    batch_extents: tuple[tuple[tuple[int, int], ...], ...]
    seed_windows: tuple[tuple[tuple[int, int], ...], ...]
    policy: PrecisionPolicy

    def batches(self) -> Iterator[tuple[int, int, int, int, int, int]]:
        """Yield ``(i, j, offset, length, seed_offset, seed_length)``."""
        for i, (extents, windows) in enumerate(zip(self.batch_extents, self.seed_windows)):
            for j, ((off, m), (soff, slen)) in enumerate(zip(extents, windows)):
                yield i, j, off, m, soff, slen

    @property
    def batch_count(self) -> int:
        return sum(len(e) for e in self.batch_extents)

    @property
    def max_batch(self) -> int:
        return max(m for e in self.batch_extents for _, m in e)

    @property
    def transform_size(self) -> int:
        return batch_transform_size(self.max_batch, self.l)

    def describe(self) -> str:
        sizes = sorted({m for e in self.batch_extents for _, m in e})
        shown = ", ".join(map(str, sizes[:4])) + (" ..." if len(sizes) > 4 else "")
        return (
            f"n={self.n} l={self.l} p={self.p} q={self.q} batches={self.batch_count} "
            f"batch_bits=[{shown}] transform={self.transform_size} mode={self.policy.mode}"
        )


@dataclass(frozen=True)
class IntermediateKey:
    parities: BitString
    block_index: int = 0
    batch_index: int = 0


def batch_transform_size(m: int, l: int) -> int:  # noqa: E741
    """Power-of-two bound on a batch's transform, used for caps and memory.

    The window [m-1, m+l-1) of an m by (m+l-1) convolution survives a cyclic
    length of m+l-1; float batches use the next fast length at or above it.
    """
    return next_pow2(m + l - 1)


def _transform_cap(policy: PrecisionPolicy) -> int:
    return MAX_EXACT_TRANSFORM if policy.mode == "exact" else policy.transform_cap


def transform_bytes(size: int, mode: str) -> int:
    return size * _BYTES_PER_POINT[mode]


def _split(total: int, count: int) -> list[int]:
    """``count`` parts of ``total // count``; the last takes the remainder."""
    base = total // count
    return [base] * (count - 1) + [total - base * (count - 1)]


def _validate_dims(n: int, l: int) -> None:  # noqa: E741
    if n < 1 or l < 1:
        raise ParameterError(f"need n >= 1 and l >= 1, got n={n}, l={l}")
    if l > n:
        raise ParameterError(f"output length l={l} exceeds input length n={n}")


def plan_grid(n: int, l: int, p: int, q: int, policy: PrecisionPolicy | None = None) -> PartitionPlan:  # noqa: E741
    """Plan with an explicit block count ``p`` and batches per block ``q``."""
    policy = policy or PrecisionPolicy()
    _validate_dims(n, l)
    if p < 1 or q < 1:
        raise ParameterError(f"p and q must be positive, got p={p}, q={q}")
    if p > n or n // p < q:
        raise InfeasiblePlanError(f"cannot cut {n} bits into {p} blocks of {q} non-empty batches")
    blocks, batches, windows = [], [], []
    off = 0
    for blen in _split(n, p):
        blocks.append((off, blen))
        extents, wins = [], []
        for m in _split(blen, q):
            extents.append((off, m))
            wins.append((n - off - m, m + l - 1))
            off += m
        batches.append(tuple(extents))
        windows.append(tuple(wins))
    plan = PartitionPlan(n, l, p, q, tuple(blocks), tuple(batches), tuple(windows), policy)
    size = plan.transform_size
    cap = _transform_cap(policy)
    if size > cap:
        raise InfeasiblePlanError(
            f"batch of {plan.max_batch} bits with l={l} needs a {size}-point transform; "
            f"{policy.mode} cap is {cap}"
        )
    return plan


def plan(
    n: int,
    l: int,  # noqa: E741
    memory_budget: int = DEFAULT_BUDGET,
    policy: PrecisionPolicy | None = None,
    batch_bits: int | None = None,
) -> PartitionPlan:
    """Choose a block/batch grid for ``n`` input and ``l`` output bits.

    Without ``batch_bits`` the batch is the largest that fits both the
    precision cap and the memory budget; a single batch is used whenever
    the whole input fits.  ``q`` is the number of batches whose working
    sets fit in the budget at once.
    """
    policy = policy or PrecisionPolicy()
    _validate_dims(n, l)
    per_point = _BYTES_PER_POINT[policy.mode]
    cap = _transform_cap(policy)
    smallest = batch_transform_size(1, l)
    if smallest > cap:
        raise InfeasiblePlanError(f"output length l={l} alone exceeds the {policy.mode} transform cap {cap}")
    if smallest * per_point > memory_budget:
        raise InfeasiblePlanError(
            f"memory budget {memory_budget} B cannot hold one batch for l={l} "
            f"({smallest * per_point} B needed)"
        )
    if batch_bits is None:
        size = cap
        while size * per_point > memory_budget:
            size //= 2
        m = min(n, size - l + 1)
    else:
        if batch_bits < 1:
            raise ParameterError(f"batch_bits must be positive, got {batch_bits}")
        m = min(n, batch_bits)
        size = batch_transform_size(m, l)
        if size > cap:
            raise InfeasiblePlanError(f"batch of {m} bits with l={l} needs {size} points; cap is {cap}")
        if size * per_point > memory_budget:
            raise InfeasiblePlanError(f"batch of {m} bits needs {size * per_point} B; budget is {memory_budget}")
    size = batch_transform_size(m, l)
    qmax = max(1, memory_budget // (size * per_point))
    total = math.ceil(n / m)
    while True:
        p = _block_count(total, qmax)
        q = min(math.ceil(total / p), n // p)
        # remainder absorption may push the last batch into a larger transform
        if q >= 1 and batch_transform_size(_grid_max_batch(n, p, q), l) <= size:
            return plan_grid(n, l, p, q, policy)
        total += 1


def _block_count(total: int, qmax: int) -> int:
    """Fewest blocks of at most ``qmax`` batches, preferring grids with no spare batches."""
    p0 = math.ceil(total / min(total, qmax))
    return min(range(p0, min(total, 2 * p0) + 1), key=lambda p: (p * math.ceil(total / p), p))


def _grid_max_batch(n: int, p: int, q: int) -> int:
    """Longest batch produced by ``plan_grid(n, ., p, q)``; the last batch of a block is its longest."""
    base = n // p
    blocks = {base, n - base * (p - 1)} if p > 1 else {n}
    return max(b - (b // q) * (q - 1) for b in blocks)


def hash_batch(
    u: BitString, seed_window: BitString, l: int, policy: PrecisionPolicy,  # noqa: E741
    block_index: int = 0, batch_index: int = 0,
) -> IntermediateKey:
    """Hash one batch: positions ``[m-1, m+l-1)`` of ``u`` convolved with its seed window."""
    m = u.length
    if seed_window.length != m + l - 1:
        raise ShapeError(f"seed window has {seed_window.length} bits, expected {m + l - 1}")
    par, _ = _batch_parities(u.to_bits(), seed_window.to_bits(), l, policy)
    return IntermediateKey(BitString.from_bits(par), block_index, batch_index)


def _batch_parities(u_bits: np.ndarray, w_bits: np.ndarray, l: int, policy: PrecisionPolicy):  # noqa: E741
    m = u_bits.shape[-1]
    size = batch_transform_size(m, l)
    cap = _transform_cap(policy)
    if size > cap:
        raise InfeasiblePlanError(f"batch needs a {size}-point transform; {policy.mode} cap is {cap}")
    length = transform_length(m + l - 1, policy.mode)
    par, residual = window_parity_rows(u_bits, w_bits, m - 1, l, policy.mode, length)
    if residual >= policy.round_guard:
        raise PrecisionExceededError(residual, policy.round_guard, policy.mode)
    return par, residual


KeyHook = Callable[[IntermediateKey], IntermediateKey]


def amplify(
    u: BitString,
    seed: ToeplitzSeed,
    plan: PartitionPlan,
    *,
    workers: int | None = None,
    serial_blocks: bool = True,
    key_hook: KeyHook | None = None,
) -> BitString:
    """XOR of every batch's intermediate key, equal to ``u T mod 2``.

    ``key_hook`` sees each intermediate key before the merge; it exists
    for fault injection in tests.
    """
    if not (u.length == seed.n == plan.n):
        raise ShapeError(f"lengths disagree: input {u.length}, seed n {seed.n}, plan n {plan.n}")
    if seed.l != plan.l:
        raise ShapeError(f"seed output length {seed.l} != plan output length {plan.l}")
    l = plan.l  # noqa: E741
    policy = plan.policy
    acc = np.zeros((l + 7) // 8, dtype=np.uint8)

    def run(task):
        i, j, off, m, soff, slen = task
        try:
            ubits = u.bit_unpacked_range(off, m)
            wbits = seed.seed.bit_unpacked_range(soff, slen)
            par, _ = _batch_parities(ubits, wbits, l, policy)
        except PAError as exc:
            raise exc.at(f"block {i}, batch {j}")
        key = IntermediateKey(BitString.from_bits(par), i, j)
        return key_hook(key) if key_hook else key

    tasks = list(plan.batches())
    groups = [[t for t in tasks if t[0] == i] for i in range(plan.p)] if serial_blocks else [tasks]
    workers = workers or default_workers()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for group in groups:
            results = pool.map(run, group) if pool else map(run, group)
            for key in results:
                np.bitwise_xor(acc, key.parities.packed, out=acc)
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)
    return BitString(acc, l, _owned=True)


def toeplitz_hash(
    u: BitString, seed: ToeplitzSeed, memory_budget: int = DEFAULT_BUDGET,
    policy: PrecisionPolicy | None = None,
) -> BitString:
    """Plan automatically and amplify."""
    return amplify(u, seed, plan(seed.n, seed.l, memory_budget, policy))
