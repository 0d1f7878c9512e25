"""Throughput benchmark over input lengths and batch sizes."""

from __future__ import annotations

import csv
import hashlib
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bitvec import BitString
from .conv import PrecisionPolicy
from .errors import InfeasiblePlanError, PrecisionExceededError
from .partition import DEFAULT_BUDGET, amplify, plan
from .toeplitz import ToeplitzSeed

MBIT = 1 << 20


@dataclass
class BenchRow:
    input_mbit: float
    batch_mbit: float
    batches: int
    p: int
    q: int
    time_ms: float
    speed_gbps: float
    key_sha256: str
    status: str = "ok"


def bench_inputs(n: int, l: int, rng_seed: int = 0) -> tuple[BitString, ToeplitzSeed]:  # noqa: E741
    """Deterministic input and seed per length, shared by every batch size."""
    rng = np.random.default_rng([rng_seed, n, l])
    return BitString.random(n, rng), ToeplitzSeed(BitString.random(n + l - 1, rng), n, l)


def run_bench(
    sizes_bits: list[int],
    batch_bits: list[int],
    precision: str = "double",
    repeats: int = 1,
    ratio: float = 0.1,
    memory_budget: int = DEFAULT_BUDGET,
    rng_seed: int = 0,
    progress=None,
) -> list[BenchRow]:
    """Time ``amplify`` for every (size, batch) pair; the reported time is the median."""
    rows = []
    policy = PrecisionPolicy(precision)
    for n in sizes_bits:
        l = max(1, int(n * ratio))  # noqa: E741
        u, seed = bench_inputs(n, l, rng_seed)
        for b in batch_bits:
            try:
                pl = plan(n, l, memory_budget, policy, batch_bits=b)
            except InfeasiblePlanError:
                rows.append(BenchRow(n / MBIT, b / MBIT, 0, 0, 0, float("nan"), float("nan"), "", "infeasible"))
                continue
            times, digest, status = [], "", "ok"
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                try:
                    key = amplify(u, seed, pl)
                except PrecisionExceededError:
                    status = "precision-exceeded"
                    break
                times.append(time.perf_counter() - t0)
                digest = hashlib.sha256(key.to_bytes()).hexdigest()
            if status != "ok":
                rows.append(BenchRow(n / MBIT, b / MBIT, pl.batch_count, pl.p, pl.q,
                                     float("nan"), float("nan"), "", status))
                continue
            t = statistics.median(times)
            rows.append(BenchRow(n / MBIT, b / MBIT, pl.batch_count, pl.p, pl.q, t * 1e3, n / t / 1e9, digest))
        if progress and batch_bits:
            for row in rows[-len(batch_bits):]:
                progress(row)
    return rows


def format_table(rows: list[BenchRow]) -> str:
    head = f"{'input (Mbit)':>12} {'batch (Mbit)':>12} {'batches':>8} {'time (ms)':>11} {'speed (Gbps)':>13}  key"
    lines = [head, "-" * len(head)]
    for r in rows:
        if r.status != "ok":
            lines.append(f"{r.input_mbit:>12g} {r.batch_mbit:>12g} {r.batches:>8} {r.status:>11}")
            continue
        lines.append(
            f"{r.input_mbit:>12g} {r.batch_mbit:>12g} {r.batches:>8} {r.time_ms:>11.1f} "
            f"{r.speed_gbps:>13.4f}  {r.key_sha256[:12]}"
        )
    return "\n".join(lines)


def write_rows(path: str | Path, rows: list[BenchRow]) -> None:
    fields = list(BenchRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
