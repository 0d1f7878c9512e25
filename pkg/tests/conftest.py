import numpy as np
import pytest

from lcpa.bitvec import BitString
from lcpa.toeplitz import ToeplitzSeed

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, n, l):
    u = BitString.random(n, rng)
    return u, ToeplitzSeed(BitString.random(n + l - 1, rng), n, l)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def session_config(role, n, rate=(1.0, 1.0, 0.0), tag_bits=64, transport=None):
    from lcpa.finite_size import FiniteSizeParams
    from lcpa.session import SessionConfig

    return SessionConfig(role, n, FiniteSizeParams(1, 1e-3, 1e-3, n), rate, transport, tag_bits)


def bob_server(port_queue, result_queue, keys, rate, tag_bits):
    """Child-process Bob: one listening socket, one session per weak key."""
    import socket

    from lcpa.session import run_session

    with socket.create_server(("127.0.0.1", 0)) as srv:
        port_queue.put(srv.getsockname()[1])
        for bits in keys:
            u = BitString.from_bytes(bits[0], bits[1])
            conn, _ = srv.accept()
            with conn:
                try:
                    key, tr = run_session(session_config("bob", u.length, rate, tag_bits), u, sock=conn)
                    result_queue.put((tr.outcome.label, key.to_bytes() if key else None, tr.kinds(),
                                      tr.digest_of("SEED")))
                except Exception as exc:  # surface to the parent instead of hanging it
                    result_queue.put(("error", repr(exc), [], None))


def run_pair_over_tcp(alice_keys, bob_keys, rate=(1.0, 1.0, 0.0), tag_bits=64):
    """Alice in this process, Bob in a forked child, one TCP session per key pair."""
    import multiprocessing as mp
    import socket

    from lcpa.session import run_session

    ctx = mp.get_context("fork")
    ports, results = ctx.Queue(), ctx.Queue()
    child = ctx.Process(target=bob_server,
                        args=(ports, results, [(k.to_bytes(), k.length) for k in bob_keys], rate, tag_bits))
    child.start()
    try:
        port = ports.get(timeout=30)
        out = []
        for u in alice_keys:
            with socket.create_connection(("127.0.0.1", port), timeout=60) as sock:
                key, tr = run_session(session_config("alice", u.length, rate, tag_bits), u, sock=sock)
            bob = results.get(timeout=60)
            out.append(((tr.outcome.label, key.to_bytes() if key else None, tr.kinds(), tr.digest_of("SEED")), bob))
        return out
    finally:
        child.join(timeout=30)
        if child.is_alive():
            child.kill()


# mpmath, 60 digits: penalty at dim_hx=2, eps_bar=eps_pa=1e-10, n=1e8
DELTA_DIGITS = 0.00409547178828739546661553934335374721684093366246
