import socket
import threading

import numpy as np
import pytest

from lcpa.bitvec import BitString
from lcpa.errors import EntropyError, SessionError, ShapeError
from lcpa.session import (
    Endpoint,
    Outcome,
    confirmation_digest,
    decode_confirm,
    decode_seed,
    encode_confirm,
    encode_seed,
    generate_seed,
    random_bits,
    run_session,
)

from conftest import run_pair_over_tcp, session_config


def run_threaded(cfg_a, key_a, cfg_b, key_b, entropy=None):
    a_sock, b_sock = socket.socketpair()
    out = {}

    def bob():
        try:
            out["bob"] = run_session(cfg_b, key_b, sock=b_sock)
        except Exception as exc:
            out["bob"] = exc

    t = threading.Thread(target=bob)
    t.start()
    try:
        out["alice"] = run_session(cfg_a, key_a, sock=a_sock, entropy=entropy)
    except Exception as exc:
        out["alice"] = exc
    a_sock.close()
    t.join(30)
    b_sock.close()
    return out["alice"], out["bob"]


def test_generate_seed_lengths_and_injected_source():
    assert generate_seed(100, 10).seed.length == 109
    zero = generate_seed(100, 10, entropy=lambda k: bytes(k))
    assert zero.seed == BitString.zeros(109)


def test_consecutive_seeds_are_independent():
    n = 1 << 20
    a, b = generate_seed(n, 1), generate_seed(n, 1)
    diff = (a.seed ^ b.seed).count()
    assert abs(diff - n / 2) <= 5 * np.sqrt(n / 4)


def test_entropy_failure_is_hard():
    def broken(k):
        raise OSError("no randomness")

    with pytest.raises(EntropyError):
        random_bits(10, broken)
    with pytest.raises(EntropyError):
        random_bits(64, lambda k: b"\x00")


def test_wire_encodings_round_trip(rng):
    seed = generate_seed(1000, 37)
    back = decode_seed(encode_seed(seed))
    assert (back.seed, back.n, back.l) == (seed.seed, 1000, 37)
    digest, cseed = BitString.random(64, rng), BitString.random(64 + 63, rng)
    assert decode_confirm(encode_confirm(digest, cseed), 37) == (digest, cseed)
    with pytest.raises(ShapeError):
        decode_confirm(encode_confirm(digest, cseed), 200)


def test_confirmation_digest_detects_single_flip(rng):
    key = BitString.random(500, rng)
    flipped = key ^ BitString.from_bits(np.eye(1, 500, 17, dtype=np.uint8)[0])
    seeds = [random_bits(500 + 63) for _ in range(50)]
    assert all(confirmation_digest(key, c, 64) == confirmation_digest(key, c, 64) for c in seeds)
    assert all(confirmation_digest(key, c, 64) != confirmation_digest(flipped, c, 64) for c in seeds)
    short = confirmation_digest(BitString.from_str("101"), random_bits(127), 64)
    assert short.length == 64


def test_happy_path_in_threads(rng):
    u = BitString.random(4096, rng)
    (ka, ta), (kb, tb) = run_threaded(session_config("alice", 4096), u, session_config("bob", 4096), u)
    assert ta.outcome is tb.outcome is Outcome.CONFIRMED
    assert ka == kb and ka.length == session_config("alice", 4096).output_length()
    assert ta.kinds() == tb.kinds() == ["SEED", "CONFIRM", "RESULT"]
    assert ta.well_ordered() and tb.well_ordered()
    assert ta.digest_of("SEED") == tb.digest_of("SEED")


def test_key_bits_never_cross_the_wire(rng):
    u = BitString.random(2048, rng)
    sent = []

    a_sock, b_sock = socket.socketpair()
    orig = a_sock.sendall

    result = {}
    t = threading.Thread(target=lambda: result.setdefault("bob", run_session(session_config("bob", 2048), u,
                                                                               sock=b_sock)))
    t.start()

    class Wrapped:
        def sendall(self, data):
            sent.append(bytes(data))
            return orig(data)

        def recv(self, k):
            return a_sock.recv(k)

    key, _ = run_session(session_config("alice", 2048), u, sock=Wrapped())
    t.join(30)
    wire = b"".join(sent)
    confirm = sent[1]
    assert key.to_bytes() not in wire
    # CONFIRM = frame header, u32 tag, 8 digest bytes, confirmation seed
    assert len(confirm) == 5 + 4 + 8 + (max(key.length, 64) + 63 + 7) // 8
    a_sock.close()
    b_sock.close()


def test_single_flip_detected_in_threads(rng):
    u = BitString.random(4096, rng)
    v = u ^ BitString.from_bits(np.eye(1, 4096, 1234, dtype=np.uint8)[0])
    (ka, ta), (kb, tb) = run_threaded(session_config("alice", 4096), u, session_config("bob", 4096), v)
    assert ta.outcome is tb.outcome is Outcome.MISMATCH
    assert ka is None and kb is None


def test_no_key_aborts_without_seed(rng):
    u = BitString.random(512, rng)
    rate = (0.9, 0.1, 0.2)
    (ka, ta), (kb, tb) = run_threaded(session_config("alice", 512, rate), u, session_config("bob", 512, rate), u)
    assert ka is None and kb is None
    assert ta.outcome is tb.outcome is Outcome.ABORTED_NO_KEY
    assert ta.kinds() == tb.kinds() == ["RESULT"]
    assert Outcome.ABORTED_NO_KEY.label == "aborted-no-key"


def test_parameter_disagreement_aborts(rng):
    u = BitString.random(1024, rng)
    alice, bob = run_threaded(session_config("alice", 1024), u,
                              session_config("bob", 1024, rate=(1.0, 0.9, 0.0)), u)
    assert isinstance(bob, SessionError)
    assert bob.transcript.outcome is Outcome.ABORTED_NO_KEY
    assert isinstance(alice, SessionError) or alice[1].outcome is Outcome.ABORTED_NO_KEY


def test_peer_vanishing_is_session_error(rng):
    a_sock, b_sock = socket.socketpair()
    b_sock.close()
    with pytest.raises(SessionError) as err:
        run_session(session_config("bob", 64), BitString.zeros(64), sock=a_sock)
    assert err.value.transcript is not None
    a_sock.close()


def test_entropy_failure_aborts_session(rng):
    def broken(k):
        raise OSError("dead")

    alice, _ = run_threaded(session_config("alice", 4096), BitString.zeros(4096),
                            session_config("bob", 4096), BitString.zeros(4096), entropy=broken)
    assert isinstance(alice, SessionError) and "entropy" in str(alice)


def test_endpoint_parse():
    assert Endpoint.parse("localhost:9000", listen=False) == Endpoint("localhost", 9000, False)
    assert Endpoint.parse(":7", listen=True) == Endpoint("127.0.0.1", 7, True)


def test_two_processes_over_tcp(rng):
    u = BitString.random(8192, rng)
    v = u ^ BitString.from_bits(np.eye(1, 8192, 0, dtype=np.uint8)[0])
    (alice, bob), (alice2, bob2) = run_pair_over_tcp([u, u], [u, v])
    assert alice[0] == bob[0] == "confirmed"
    assert alice[1] == bob[1] is not None
    assert alice[3] == bob[3]
    assert alice2[0] == bob2[0] == "mismatch"
