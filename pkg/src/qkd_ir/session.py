"""Two-party message transport with a simulated clock and a leakage ledger.

A *message* is one logical flush in one direction.  Consecutive messages in
the same direction share a flush and are charged the one-way latency once;
every change of direction counts as one round.

Wire framing (used by the TCP transport, bit-exact)::

    uint32 big-endian  length of everything that follows
    uint8              kind
    uint8              direction (0 = Alice->Bob, 1 = Bob->Alice)
    bytes              payload bits packed LSB-first
    uint8              payload bit count mod 8
"""

from __future__ import annotations

import enum
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import ReconciliationReport, pack_bits, unpack_bits


class Kind(enum.IntEnum):
    PARITY_BATCH = 1
    SYNDROME = 2
    REVEAL_REQUEST = 3
    REVEAL_VALUES = 4
    VERIFY_TAG = 5
    ACK = 6


KEY_KINDS = frozenset({Kind.PARITY_BATCH, Kind.SYNDROME, Kind.REVEAL_VALUES, Kind.VERIFY_TAG})


class Direction(enum.IntEnum):
    ALICE_TO_BOB = 0
    BOB_TO_ALICE = 1


ALICE = "alice"
BOB = "bob"
_DIRECTION_OF = {ALICE: Direction.ALICE_TO_BOB, BOB: Direction.BOB_TO_ALICE}


class SessionClosed(RuntimeError):
    pass


class WireFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    direction: Direction
    kind: Kind
    payload: np.ndarray
    info_bits: int | None = None

    @property
    def payload_bits(self) -> int:
        return int(self.payload.size)

    @property
    def key_bits(self) -> int:
        """Bits of key information this message discloses."""
        if self.kind not in KEY_KINDS:
            return 0
        return self.payload_bits if self.info_bits is None else self.info_bits


def encode_message(msg: Message) -> bytes:
    body = pack_bits(msg.payload) if msg.payload_bits else b""
    rest = bytes([int(msg.kind), int(msg.direction)]) + body + bytes([msg.payload_bits % 8])
    return struct.pack(">I", len(rest)) + rest


def decode_message(frame: bytes) -> Message:
    if len(frame) < 7:
        raise WireFormatError("frame too short")
    (length,) = struct.unpack(">I", frame[:4])
    rest = frame[4:]
    if length != len(rest):
        raise WireFormatError(f"length prefix {length} does not match body of {len(rest)} bytes")
    try:
        kind = Kind(rest[0])
        direction = Direction(rest[1])
    except ValueError as exc:
        raise WireFormatError(str(exc)) from None
    body = rest[2:-1]
    tail = rest[-1]
    if tail > 7:
        raise WireFormatError("bit-count byte out of range")
    nbits = len(body) * 8 if tail == 0 else (len(body) - 1) * 8 + tail
    if nbits < 0:
        raise WireFormatError("inconsistent bit count")
    payload = unpack_bits(body, nbits) if nbits else np.zeros(0, dtype=np.uint8)
    return Message(direction, kind, payload)


def wire_size(payload_bits: int) -> int:
    return 4 + 2 + (payload_bits + 7) // 8 + 1


def encode_uints(values, width: int) -> np.ndarray:
    """Fixed-width unsigned integers as a flat bit vector (LSB first)."""
    vals = np.asarray(values, dtype=np.uint64).ravel()
    shifts = np.arange(width, dtype=np.uint64)
    return ((vals[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).ravel()


def decode_uints(bits: np.ndarray, width: int) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint64).reshape(-1, width)
    return (arr << np.arange(width, dtype=np.uint64)).sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class LatencyModel:
    one_way_latency: float = 0.0
    bandwidth: float = float("inf")

    def __post_init__(self):
        if self.one_way_latency < 0:
            raise ValueError("latency must be non-negative")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class LeakLedger:
    leaked_bits: int = 0
    messages: int = 0
    rounds: int = 0
    bytes_on_wire: int = 0
    acks: int = 0

    def snapshot(self) -> "LeakLedger":
        return LeakLedger(self.leaked_bits, self.messages, self.rounds, self.bytes_on_wire, self.acks)


class MemoryTransport:
    def __init__(self):
        self._queues = {ALICE: deque(), BOB: deque()}

    def deliver(self, to: str, msg: Message) -> None:
        self._queues[to].append(msg)

    def fetch(self, party: str) -> Message:
        if not self._queues[party]:
            raise LookupError(f"no message pending for {party}")
        return self._queues[party].popleft()

    def close(self):
        pass


class TcpTransport:
    """Loopback TCP pair carrying wire-encoded frames between the endpoints."""

    def __init__(self):
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.bind(("127.0.0.1", 0))
        server.listen(1)
        a = socket.create_connection(server.getsockname())
        b, _ = server.accept()
        server.close()
        for s in (a, b):
            s.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, 1 << 22)
            s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
            s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._socks = {ALICE: a, BOB: b}
        self._pending = {ALICE: 0, BOB: 0}

    def deliver(self, to: str, msg: Message) -> None:
        sender = BOB if to == ALICE else ALICE
        self._socks[sender].sendall(encode_message(msg))
        self._pending[to] += 1

    def _read_exact(self, sock, n):
        buf = bytearray()
        while len(buf) < n:
            chunk = sock.recv(n - len(buf))
            if not chunk:
                raise SessionClosed("connection closed")
            buf.extend(chunk)
        return bytes(buf)

    def fetch(self, party: str) -> Message:
        if not self._pending[party]:
            raise LookupError(f"no message pending for {party}")
        sock = self._socks[party]
        head = self._read_exact(sock, 4)
        (length,) = struct.unpack(">I", head)
        self._pending[party] -= 1
        return decode_message(head + self._read_exact(sock, length))

    def close(self):
        for s in self._socks.values():
            s.close()


class Endpoint:
    def __init__(self, session: "Session", party: str):
        self.session = session
        self.party = party

    def send(self, kind: Kind, payload=None, info_bits: int | None = None) -> Message:
        return self.session.send(self.party, kind, payload, info_bits)

    def receive(self, expect: Kind | None = None) -> Message:
        msg = self.session.receive(self.party)
        if expect is not None and msg.kind != expect:
            raise RuntimeError(f"{self.party} expected {expect.name}, got {msg.kind.name}")
        return msg


@dataclass
class Session:
    latency: LatencyModel = field(default_factory=LatencyModel)
    transport: str = "memory"

    def __post_init__(self):
        self.ledger = LeakLedger()
        self.clock = 0.0
        self.transcript: list[Message] = []
        self.closed = False
        self._last_direction: Direction | None = None
        self._lock = threading.Lock()
        self._transport = TcpTransport() if self.transport == "tcp" else MemoryTransport()
        self.alice = Endpoint(self, ALICE)
        self.bob = Endpoint(self, BOB)

    def send(self, sender: str, kind: Kind, payload=None, info_bits: int | None = None) -> Message:
        if self.closed:
            raise SessionClosed("session is closed")
        bits = np.zeros(0, dtype=np.uint8) if payload is None else np.asarray(payload, dtype=np.uint8).ravel()
        if info_bits is not None and not 0 <= info_bits <= bits.size:
            raise ValueError("info_bits must lie between 0 and the payload length")
        direction = _DIRECTION_OF[sender]
        msg = Message(direction, Kind(kind), bits, info_bits)
        with self._lock:
            led = self.ledger
            led.messages += 1
            led.leaked_bits += msg.key_bits
            led.bytes_on_wire += wire_size(msg.payload_bits)
            if msg.kind == Kind.ACK:
                led.acks += 1
            if direction != self._last_direction:
                if self._last_direction is not None:
                    led.rounds += 1
                self.clock += self.latency.one_way_latency
                self._last_direction = direction
            if np.isfinite(self.latency.bandwidth):
                self.clock += msg.payload_bits / self.latency.bandwidth
            self.transcript.append(msg)
        self._transport.deliver(BOB if sender == ALICE else ALICE, msg)
        return msg

    def receive(self, party: str) -> Message:
        if self.closed:
            raise SessionClosed("session is closed")
        return self._transport.fetch(party)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(latency: LatencyModel | None = None, transport: str = "memory") -> Session:
    """Fresh session with paired endpoints ``session.alice`` / ``session.bob``."""
    return Session(latency or LatencyModel(), transport)


def replay_leakage(transcript) -> int:
    """Key-information bits recomputed from a transcript."""
    return sum(m.key_bits for m in transcript)


def throughput(report: ReconciliationReport, latency: LatencyModel, compute_time: float) -> float:
    """Serial-execution throughput in bits per second."""
    denom = compute_time + report.rounds * latency.one_way_latency
    if denom <= 0:
        return float("inf")
    return report.n / denom
