"""Command line front-end.

Exit status is 0 on success; errors exit with the ``exit_code`` of their
class (see :mod:`lcpa.errors`).  ``LCPA_WORKERS`` overrides the number of
worker threads used for batches.
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .bitvec import BitString
from .conv import PrecisionPolicy
from .errors import KeyFileError, PAError, ParameterError
from .finite_size import (
    FiniteSizeParams,
    collision_probability,
    key_rate_result,
    smallest_n_with_key,
)
from .keyfile import read_key, write_key
from .partition import DEFAULT_BUDGET, IntermediateKey, amplify, hash_batch, plan, plan_grid
from .session import Endpoint, SessionConfig, generate_seed, run_session
from .toeplitz import ToeplitzSeed, hash_direct

VERIFY_MAX_N = 1 << 22
EXIT_VERIFY_FAILED = 9
EXIT_NOT_CONFIRMED = 10


def _count(text: str) -> int:
    """Accept ``4096``, ``1e8`` or ``4M``/``4Mi`` style bit counts."""
    t = text.strip()
    mult = 1
    for suffix, m in (("Gi", 1 << 30), ("Mi", 1 << 20), ("Ki", 1 << 10), ("G", 1 << 30), ("M", 1 << 20), ("K", 1 << 10)):
        if t.endswith(suffix):
            t, mult = t[: -len(suffix)], m
            break
    try:
        value = float(t) * mult
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None
    if value != int(value) or value < 0:
        raise argparse.ArgumentTypeError(f"not a non-negative integer count: {text!r}")
    return int(value)


def _out(msg: str = "") -> None:
    print(msg, flush=True)


# amplify


def cmd_amplify(args) -> int:
    t_start = time.perf_counter()
    u = read_key(args.input)
    n = u.length
    if args.seed is not None:
        seed_bits = read_key(args.seed)
        l = args.length if args.length is not None else seed_bits.length - n + 1  # noqa: E741
    else:
        if args.length is None:
            raise ParameterError("--length is required when generating a seed")
        l = args.length  # noqa: E741
    if l < 1:
        raise ParameterError(f"output length must be >= 1, got {l}")
    if args.seed is not None:
        if seed_bits.length != n + l - 1:
            raise ParameterError(f"seed has {seed_bits.length} bits; n={n}, l={l} needs {n + l - 1}")
        seed = ToeplitzSeed(seed_bits, n, l)
    else:
        seed = generate_seed(n, l)
        write_key(args.generate_seed, seed.seed)
        _out(f"seed: {seed.seed.length} bits written to {args.generate_seed}")
    policy = PrecisionPolicy(args.precision, args.max_batch_bits)
    t0 = time.perf_counter()
    pl = plan(n, l, args.budget, policy, batch_bits=args.batch_bits)
    key = amplify(u, seed, pl)
    t_hash = time.perf_counter() - t0
    write_key(args.output, key)
    t_total = time.perf_counter() - t_start
    _out(f"plan: {pl.describe()}")
    _out(f"hash time: {t_hash:.3f} s ({n / t_hash:.4g} bit/s)")
    _out(f"total time incl. I/O: {t_total:.3f} s ({n / t_total:.4g} bit/s)")
    _out(f"key: {key.length} bits written to {args.output}")
    return 0


# params


def cmd_params(args) -> int:
    fs = FiniteSizeParams(args.dim_hx, args.eps_bar, args.eps_pa, args.n)
    res = key_rate_result(fs, args.beta, args.i_xy, args.s_ye)
    _out(f"delta(n)         = {res.delta_n:.10g}")
    _out(f"key rate k       = {res.k:.10g}")
    _out(f"output length l  = {res.l}")
    if res.l >= 1:
        cp = collision_probability(args.n, res.l)
        _out(f"collision log2   = {cp.log2:.10g}")
    else:
        _out("collision log2   = n/a (l = 0)")
    if res.k <= 0:
        _out(f"no secure key at this n (n={args.n})")
        n_min = smallest_n_with_key(args.dim_hx, args.eps_bar, args.eps_pa, args.beta, args.i_xy, args.s_ye)
        if n_min is None:
            _out("no block length yields a positive key rate for these inputs")
        else:
            _out(f"smallest n with k > 0: {n_min}")
    return 0


# seed-gen


def cmd_seed_gen(args) -> int:
    if args.length < 1:
        raise ParameterError(f"output length must be >= 1, got {args.length}")
    seed = generate_seed(args.n, args.length)
    write_key(args.output, seed.seed)
    _out(f"seed: {seed.seed.length} bits (n={args.n}, l={args.length}) written to {args.output}")
    return 0


# verify


def _random_plan(n: int, l: int, rng: random.Random, policy: PrecisionPolicy):  # noqa: E741
    p = rng.randint(1, min(n, 8))
    q = rng.randint(1, max(1, min(n // p, 8)))
    return plan_grid(n, l, p, q, policy)


def _fault_hook(target: tuple[int, int] | None):
    if target is None:
        return None

    def hook(key: IntermediateKey) -> IntermediateKey:
        if (key.block_index, key.batch_index) != target:
            return key
        bits = key.parities.to_bits().copy()
        bits[0] ^= 1
        return IntermediateKey(BitString.from_bits(bits), key.block_index, key.batch_index)

    return hook


def locate_mismatch(u, seed, pl, hook=None) -> tuple[int, int] | None:
    """First batch whose intermediate key disagrees with the oracle sub-product."""
    for i, j, off, m, soff, slen in pl.batches():
        window = seed.seed.bit_unpacked_range(soff, slen)
        u_part = BitString.from_bits(u.bit_unpacked_range(off, m))
        key = hash_batch(u_part, BitString.from_bits(window), pl.l, pl.policy, i, j)
        if hook:
            key = hook(key)
        ref = hash_direct(u_part, ToeplitzSeed(BitString.from_bits(window), m, pl.l))
        if key.parities != ref:
            return i, j
    return None


def verify(n: int, l: int, trials: int, rng_seed: int = 0, precision: str = "double",  # noqa: E741
           fault: tuple[int, int] | None = None, log=_out) -> bool:
    if n > VERIFY_MAX_N:
        raise ParameterError(f"verify is limited to n <= {VERIFY_MAX_N} (oracle cost)")
    if not 1 <= l <= n:
        raise ParameterError(f"need 1 <= l <= n, got l={l}, n={n}")
    if trials == 0:
        print("warning: 0 trials requested; vacuous pass", file=sys.stderr)
        log("PASS (0 trials)")
        return True
    rng = random.Random(rng_seed)
    nrng = np.random.default_rng(rng_seed)
    policy = PrecisionPolicy(precision)
    hook = _fault_hook(fault)
    for t in range(trials):
        u = BitString.random(n, nrng)
        seed = ToeplitzSeed(BitString.random(n + l - 1, nrng), n, l)
        pl = _random_plan(n, l, rng, policy)
        if fault is not None and fault not in {(i, j) for i, j, *_ in pl.batches()}:
            pl = plan_grid(n, l, fault[0] + 1, fault[1] + 1, policy)
        got = amplify(u, seed, pl, key_hook=hook)
        if got != hash_direct(u, seed):
            where = locate_mismatch(u, seed, pl, hook)
            loc = f"block {where[0]}, batch {where[1]}" if where else "merge"
            log(f"FAIL trial {t}: p={pl.p} q={pl.q} mismatch at {loc}")
            return False
    log(f"PASS ({trials} trials, n={n}, l={l})")
    return True


def cmd_verify(args) -> int:
    fault = None
    if args.inject_fault:
        i, _, j = args.inject_fault.partition(",")
        fault = (int(i), int(j))
    ok = verify(args.n, args.length, args.trials, args.rng_seed, args.precision, fault)
    return 0 if ok else EXIT_VERIFY_FAILED


# bench


def cmd_bench(args) -> int:
    sizes = [int(s * bench_mod.MBIT) for s in args.sizes]
    batches = [int(b * bench_mod.MBIT) for b in args.batch]

    def progress(row):
        logging.getLogger("lcpa.bench").info("%s", row)

    rows = bench_mod.run_bench(sizes, batches, args.precision, args.repeats, args.ratio,
                               args.budget, args.rng_seed, progress)
    _out(bench_mod.format_table(rows))
    if args.out:
        bench_mod.write_rows(args.out, rows)
        _out(f"rows written to {args.out}")
    return 0


# session


def cmd_session(args) -> int:
    if bool(args.listen) == bool(args.connect):
        raise ParameterError("give exactly one of --listen or --connect")
    u = read_key(args.key)
    endpoint = Endpoint.parse(args.listen or args.connect, listen=bool(args.listen))
    fs = FiniteSizeParams(args.dim_hx, args.eps_bar, args.eps_pa, u.length)
    cfg = SessionConfig(args.role, u.length, fs, (args.beta, args.i_xy, args.s_ye), endpoint,
                        args.tag_bits, PrecisionPolicy(args.precision), args.budget)
    key, transcript = run_session(
        cfg, u, on_listen=lambda port: _out(f"listening on {endpoint.host}:{port}")
    )
    for m in transcript.messages:
        _out(f"{m.direction:>8} {m.kind:<7} {m.length:>10} B  sha256={m.digest[:16]}")
    _out(f"outcome: {transcript.outcome.label}")
    if key is not None:
        write_key(args.output, key)
        _out(f"key: {key.length} bits written to {args.output}")
    return 0 if key is not None else EXIT_NOT_CONFIRMED


# parser


def _finite_size_args(p: argparse.ArgumentParser, with_n: bool) -> None:
    p.add_argument("--dim-hx", type=int, default=2)
    p.add_argument("--eps-bar", type=float, default=1e-10)
    p.add_argument("--eps-pa", type=float, default=1e-10)
    if with_n:
        p.add_argument("--n", type=_count, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--i-xy", type=float, required=True)
    p.add_argument("--s-ye", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcpa", description="Length-compatible Toeplitz privacy amplification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    precisions = ["single", "double", "exact"]

    p = sub.add_parser("amplify", help="hash a key file down to l bits")
    p.add_argument("input", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--seed", type=Path, help="existing seed file (n + l - 1 bits)")
    src.add_argument("--generate-seed", type=Path, metavar="PATH", help="draw a fresh seed and save it here")
    p.add_argument("-l", "--length", type=_count)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--budget", type=_count, default=DEFAULT_BUDGET, help="working memory in bytes")
    p.add_argument("--precision", choices=precisions, default="double")
    p.add_argument("--max-batch-bits", type=_count)
    p.add_argument("--batch-bits", type=_count, help="fixed batch length instead of the largest feasible")
    p.set_defaults(func=cmd_amplify)

    p = sub.add_parser("params", help="finite-size penalty, key rate and output length")
    _finite_size_args(p, with_n=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("seed-gen", help="write a random Toeplitz seed")
    p.add_argument("--n", type=_count, required=True)
    p.add_argument("-l", "--length", type=_count, required=True)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_seed_gen)

    p = sub.add_parser("verify", help="compare partitioned hashing with the direct oracle")
    p.add_argument("--n", type=_count, default=1 << 16)
    p.add_argument("-l", "--length", type=_count, default=1 << 12)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--precision", choices=precisions, default="double")
    p.add_argument("--inject-fault", metavar="I,J", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="throughput table over input lengths and batch sizes")
    p.add_argument("--sizes", type=float, nargs="*", default=[4, 8, 16, 32, 64, 128], help="input lengths in Mbit")
    p.add_argument("--batch", type=float, nargs="+", default=[1], help="batch sizes in Mbit")
    p.add_argument("--precision", choices=precisions, default="double")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--ratio", type=float, default=0.1, help="output length as a fraction of input")
    p.add_argument("--budget", type=_count, default=DEFAULT_BUDGET)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV file for the rows")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("session", help="run one side of the two-party exchange")
    p.add_argument("--role", choices=["alice", "bob"], required=True)
    p.add_argument("--listen", metavar="HOST:PORT")
    p.add_argument("--connect", metavar="HOST:PORT")
    p.add_argument("--key", type=Path, required=True, help="weak key file")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--tag-bits", type=int, default=64)
    p.add_argument("--precision", choices=precisions, default="double")
    p.add_argument("--budget", type=_count, default=DEFAULT_BUDGET)
    _finite_size_args(p, with_n=False)
    p.set_defaults(func=cmd_session)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return KeyFileError.exit_code


if __name__ == "__main__":
    sys.exit(main())
