"""Two-party privacy amplification over a framed byte stream.

Alice draws the Toeplitz seed and sends it (SEED), both sides hash their
weak keys, Alice sends a short Toeplitz digest of her key together with the
fresh seed that produced it (CONFIRM), and Bob answers with the outcome
(RESULT).  The channel is assumed to be authenticated.

Frame: u32 LE payload length, u8 type, payload.

* SEED    = u64 n, u64 l, packed seed bits (n + l - 1)
* CONFIRM = u32 tag bits, packed digest, packed confirmation seed
* RESULT  = u8 outcome code
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Callable

from .bitvec import BitString, zero_extend
from .conv import PrecisionPolicy
from .errors import EntropyError, PAError, ParameterError, SessionError, ShapeError
from .finite_size import FiniteSizeParams, key_rate_result
from .partition import DEFAULT_BUDGET, toeplitz_hash
from .toeplitz import ToeplitzSeed

log = logging.getLogger(__name__)

SEED, CONFIRM, RESULT = 1, 2, 3
_KIND_NAMES = {SEED: "SEED", CONFIRM: "CONFIRM", RESULT: "RESULT"}
_FRAME = struct.Struct("<IB")
_SEED_HEAD = struct.Struct("<QQ")
_CONFIRM_HEAD = struct.Struct("<I")

Entropy = Callable[[int], bytes]


class Outcome(enum.Enum):
    CONFIRMED = 0
    MISMATCH = 1
    ABORTED_NO_KEY = 2

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int
    listen: bool = False

    @classmethod
    def parse(cls, text: str, listen: bool) -> "Endpoint":
        host, _, port = text.rpartition(":")
        if not port.isdigit():
            raise ParameterError(f"endpoint must look like HOST:PORT, got {text!r}")
        return cls(host or "127.0.0.1", int(port), listen)


@dataclass(frozen=True)
class SessionConfig:
    role: str
    n: int
    finite_size: FiniteSizeParams
    rate_inputs: tuple[float, float, float]
    transport: Endpoint | None = None
    confirm_tag_bits: int = 64
    policy: PrecisionPolicy = field(default_factory=PrecisionPolicy)
    memory_budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.role not in ("alice", "bob"):
            raise ParameterError(f"role must be alice or bob, got {self.role!r}")
        if self.confirm_tag_bits < 64:
            raise ParameterError(f"confirm_tag_bits must be >= 64, got {self.confirm_tag_bits}")
        if self.finite_size.n != self.n:
            raise ParameterError(f"finite-size n={self.finite_size.n} disagrees with session n={self.n}")

    def output_length(self) -> int:
        beta, i_xy, s_ye = self.rate_inputs
        return key_rate_result(self.finite_size, beta, i_xy, s_ye).l


@dataclass(frozen=True)
class MessageRecord:
    direction: str  # "sent" or "received"
    kind: str
    length: int
    digest: str  # sha256 of the payload


@dataclass
class SessionTranscript:
    messages: list[MessageRecord] = field(default_factory=list)
    outcome: Outcome | None = None

    def record(self, direction: str, kind: int, payload: bytes) -> None:
        self.messages.append(
            MessageRecord(direction, _KIND_NAMES.get(kind, f"type{kind}"), len(payload),
                          hashlib.sha256(payload).hexdigest())
        )

    def kinds(self) -> list[str]:
        return [m.kind for m in self.messages]

    def well_ordered(self) -> bool:
        """Messages form a prefix-closed subsequence of SEED, CONFIRM, RESULT."""
        order = ["SEED", "CONFIRM", "RESULT"]
        kinds = self.kinds()
        if kinds == ["RESULT"]:
            return True
        return kinds == order[: len(kinds)]

    def digest_of(self, kind: str) -> str | None:
        for m in self.messages:
            if m.kind == kind:
                return m.digest
        return None


# framing


class FramedChannel:
    def __init__(self, sock: socket.socket, transcript: SessionTranscript):
        self.sock = sock
        self.transcript = transcript

    def send(self, kind: int, payload: bytes) -> None:
        try:
            self.sock.sendall(_FRAME.pack(len(payload), kind) + payload)
        except OSError as exc:
            raise SessionError(f"send failed: {exc}", self.transcript) from exc
        self.transcript.record("sent", kind, payload)

    def _recv_exact(self, size: int) -> bytes:
        chunks, got = [], 0
        while got < size:
            try:
                chunk = self.sock.recv(min(size - got, 1 << 20))
            except OSError as exc:
                raise SessionError(f"receive failed: {exc}", self.transcript) from exc
            if not chunk:
                raise SessionError("peer closed the connection mid-frame", self.transcript)
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self) -> tuple[int, bytes]:
        length, kind = _FRAME.unpack(self._recv_exact(_FRAME.size))
        if kind not in _KIND_NAMES:
            raise SessionError(f"unknown message type {kind}", self.transcript)
        payload = self._recv_exact(length)
        self.transcript.record("received", kind, payload)
        return kind, payload

    def expect(self, *kinds: int) -> tuple[int, bytes]:
        kind, payload = self.recv()
        if kind not in kinds:
            want = "/".join(_KIND_NAMES[k] for k in kinds)
            raise SessionError(f"expected {want}, got {_KIND_NAMES[kind]}", self.transcript)
        return kind, payload


def encode_seed(seed: ToeplitzSeed) -> bytes:
    return _SEED_HEAD.pack(seed.n, seed.l) + seed.seed.to_bytes()


def decode_seed(payload: bytes) -> ToeplitzSeed:
    if len(payload) < _SEED_HEAD.size:
        raise ShapeError(f"SEED payload of {len(payload)} bytes is shorter than its header")
    n, l = _SEED_HEAD.unpack_from(payload)  # noqa: E741
    if n < 1 or l < 1:
        raise ShapeError(f"SEED declares invalid dimensions n={n}, l={l}")
    body = payload[_SEED_HEAD.size:]
    if len(body) != (n + l - 1 + 7) // 8:
        raise ShapeError(f"SEED body has {len(body)} bytes, n={n} l={l} needs {(n + l + 6) // 8}")
    return ToeplitzSeed(BitString.from_bytes(body, n + l - 1), n, l)


def encode_confirm(digest: BitString, confirm_seed: BitString) -> bytes:
    return _CONFIRM_HEAD.pack(digest.length) + digest.to_bytes() + confirm_seed.to_bytes()


def decode_confirm(payload: bytes, key_bits: int) -> tuple[BitString, BitString]:
    (tag,) = _CONFIRM_HEAD.unpack_from(payload)
    dlen = (tag + 7) // 8
    slen = _confirm_seed_bits(key_bits, tag)
    body = payload[_CONFIRM_HEAD.size:]
    if len(body) != dlen + (slen + 7) // 8:
        raise ShapeError(f"CONFIRM body has {len(body)} bytes, expected {dlen + (slen + 7) // 8}")
    return BitString.from_bytes(body[:dlen], tag), BitString.from_bytes(body[dlen:], slen)


# primitives


def random_bits(length: int, entropy: Entropy | None = None) -> BitString:
    entropy = entropy or os.urandom
    nbytes = (length + 7) // 8
    try:
        raw = entropy(nbytes)
    except Exception as exc:  # never fall back to a weaker source
        raise EntropyError(f"entropy source failed: {exc}") from exc
    if not isinstance(raw, (bytes, bytearray)) or len(raw) != nbytes:
        raise EntropyError(f"entropy source returned {len(raw) if raw is not None else 'nothing'} of {nbytes} bytes")
    return BitString.from_bytes(bytes(raw), length)


def generate_seed(n: int, l: int, entropy: Entropy | None = None) -> ToeplitzSeed:  # noqa: E741
    if n < 1 or l < 1:
        raise ParameterError(f"need n >= 1 and l >= 1, got n={n}, l={l}")
    return ToeplitzSeed(random_bits(n + l - 1, entropy), n, l)


def _confirm_seed_bits(key_bits: int, tag_bits: int) -> int:
    return max(key_bits, tag_bits) + tag_bits - 1


def confirmation_digest(key: BitString, confirm_seed: BitString, tag_bits: int) -> BitString:
    """Toeplitz hash of the key down to ``tag_bits``; short keys are zero-extended first."""
    width = max(key.length, tag_bits)
    return toeplitz_hash(zero_extend(key, width), ToeplitzSeed(confirm_seed, width, tag_bits))


# protocol


def _open(endpoint: Endpoint, timeout: float = 30.0, on_listen=None) -> socket.socket:
    if endpoint.listen:
        with socket.create_server((endpoint.host, endpoint.port)) as srv:
            if on_listen is not None:
                on_listen(srv.getsockname()[1])
            srv.settimeout(timeout)
            conn, _ = srv.accept()
            conn.settimeout(None)
            return conn
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection((endpoint.host, endpoint.port), timeout=timeout)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def run_session(
    cfg: SessionConfig,
    weak_key: BitString,
    *,
    sock: socket.socket | None = None,
    entropy: Entropy | None = None,
    on_listen: Callable[[int], None] | None = None,
) -> tuple[BitString | None, SessionTranscript]:
    """Run one side of the exchange.

    Returns the secret key (None unless the outcome is confirmed) and the
    transcript.  Pass ``sock`` to reuse an open connection, otherwise
    ``cfg.transport`` is used; ``on_listen`` receives the bound port when
    listening.
    """
    if weak_key.length != cfg.n:
        raise ShapeError(f"weak key has {weak_key.length} bits, session expects {cfg.n}")
    transcript = SessionTranscript()
    own = sock is None
    if own:
        if cfg.transport is None:
            raise ParameterError("no socket given and no transport configured")
        try:
            sock = _open(cfg.transport, on_listen=on_listen)
        except OSError as exc:
            raise SessionError(f"cannot reach peer at {cfg.transport}: {exc}", transcript) from exc
    chan = FramedChannel(sock, transcript)
    try:
        run = _alice if cfg.role == "alice" else _bob
        key = run(cfg, weak_key, chan, entropy)
    except SessionError:
        raise
    except PAError as exc:
        raise SessionError(f"{cfg.role}: {exc}", transcript) from exc
    finally:
        if own:
            sock.close()
    log.info("%s: session %s", cfg.role, transcript.outcome.label)
    return key, transcript


def _alice(cfg: SessionConfig, u: BitString, chan: FramedChannel, entropy) -> BitString | None:
    l = cfg.output_length()  # noqa: E741
    if l <= 0:
        chan.send(RESULT, bytes([Outcome.ABORTED_NO_KEY.value]))
        chan.transcript.outcome = Outcome.ABORTED_NO_KEY
        return None
    seed = generate_seed(cfg.n, l, entropy)
    chan.send(SEED, encode_seed(seed))
    key = toeplitz_hash(u, seed, cfg.memory_budget, cfg.policy)
    tag = cfg.confirm_tag_bits
    confirm_seed = random_bits(_confirm_seed_bits(l, tag), entropy)
    chan.send(CONFIRM, encode_confirm(confirmation_digest(key, confirm_seed, tag), confirm_seed))
    _, payload = chan.expect(RESULT)
    outcome = _decode_outcome(payload, chan)
    chan.transcript.outcome = outcome
    return key if outcome is Outcome.CONFIRMED else None


def _bob(cfg: SessionConfig, u: BitString, chan: FramedChannel, entropy) -> BitString | None:
    l = cfg.output_length()  # noqa: E741
    kind, payload = chan.expect(SEED, RESULT)
    if kind == RESULT:
        chan.transcript.outcome = _decode_outcome(payload, chan)
        return None
    try:
        seed = decode_seed(payload)
    except ShapeError as exc:
        raise SessionError(f"malformed SEED: {exc}", chan.transcript) from exc
    if seed.n != cfg.n or seed.l != l:
        chan.send(RESULT, bytes([Outcome.ABORTED_NO_KEY.value]))
        chan.transcript.outcome = Outcome.ABORTED_NO_KEY
        raise SessionError(
            f"SEED declares n={seed.n}, l={seed.l}; local parameters give n={cfg.n}, l={l}",
            chan.transcript,
        )
    key = toeplitz_hash(u, seed, cfg.memory_budget, cfg.policy)
    _, payload = chan.expect(CONFIRM)
    try:
        their_digest, confirm_seed = decode_confirm(payload, l)
    except (ShapeError, struct.error) as exc:
        raise SessionError(f"malformed CONFIRM: {exc}", chan.transcript) from exc
    if their_digest.length != cfg.confirm_tag_bits:
        raise SessionError(
            f"CONFIRM tag has {their_digest.length} bits, expected {cfg.confirm_tag_bits}", chan.transcript
        )
    mine = confirmation_digest(key, confirm_seed, their_digest.length)
    outcome = Outcome.CONFIRMED if mine == their_digest else Outcome.MISMATCH
    chan.send(RESULT, bytes([outcome.value]))
    chan.transcript.outcome = outcome
    return key if outcome is Outcome.CONFIRMED else None


def _decode_outcome(payload: bytes, chan: FramedChannel) -> Outcome:
    if len(payload) != 1:
        raise SessionError(f"RESULT payload must be 1 byte, got {len(payload)}", chan.transcript)
    try:
        return Outcome(payload[0])
    except ValueError:
        raise SessionError(f"unknown outcome code {payload[0]}", chan.transcript) from None
