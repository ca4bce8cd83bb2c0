"""Binary frames, the binary symmetric channel and efficiency metrics.

Bits are held as ``uint8`` arrays of zeros and ones, index order equal to
logical order.  When a frame goes on the wire it is packed
least-significant-bit first (see :func:`pack_bits`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by ``seed`` and a stream path.

    Distinct ``stream`` tuples give independent streams for the same seed, so
    every stochastic component can draw from its own reproducible sequence.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def pack_bits(bits: np.ndarray) -> bytes:
    """Pack 0/1 values LSB-first within each byte."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    return np.unpackbits(raw, count=count, bitorder="little")


@dataclass(frozen=True)
class BitFrame:
    """Fixed-length key material.

    ``bits`` is stored read-only; use :meth:`with_bits` to derive a new frame.
    """

    bits: np.ndarray
    frame_index: int = 0
    holder: str = "alice"

    def __post_init__(self):
        arr = np.array(self.bits, dtype=np.uint8).ravel()
        if arr.size == 0:
            raise ValueError("frame must contain at least one bit")
        if arr.max(initial=0) > 1:
            raise ValueError("frame symbols must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.length

    def with_bits(self, bits, holder: str | None = None) -> "BitFrame":
        return BitFrame(bits, self.frame_index, self.holder if holder is None else holder)

    @classmethod
    def random(cls, n: int, seed: int, frame_index: int = 0) -> "BitFrame":
        rng = make_rng(seed, 0, frame_index)
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8), frame_index, "alice")


@dataclass(frozen=True)
class ChannelParams:
    q: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q < 0.5:
            raise ValueError(f"crossover probability must lie in [0, 0.5), got {self.q}")


def transmit_bsc(x: BitFrame, params: ChannelParams) -> BitFrame:
    """Pass ``x`` through a binary symmetric channel with crossover ``params.q``."""
    rng = make_rng(params.seed, 1, x.frame_index)
    flips = rng.random(x.length) < params.q
    return x.with_bits(x.bits ^ flips.astype(np.uint8), holder="bob")


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability outside [0, 1]: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def qber(x: BitFrame, y: BitFrame) -> float:
    """Fraction of positions where ``x`` and ``y`` differ."""
    if x.length != y.length:
        raise ValueError(f"length mismatch: {x.length} != {y.length}")
    return int(np.count_nonzero(x.bits != y.bits)) / x.length


@dataclass(frozen=True)
class EfficiencyRecord:
    leak_ir: float
    n: int
    q: float
    f: float
    f_fer: float
    beta: float
    fer: float = 0.0
    leak_ev: float = 0.0


def beta_from_f(f: float, q: float) -> float:
    # uniform keys: H(X) = 1
    h = binary_entropy(q)
    return (1.0 - f * h) / (1.0 - h)


def f_from_beta(beta: float, q: float) -> float:
    h = binary_entropy(q)
    return (1.0 - beta * (1.0 - h)) / h


def efficiency_metrics(leak_ir: float, n: int, q: float, fer: float = 0.0,
                       leak_ev: float = 0.0) -> EfficiencyRecord:
    """Efficiency ``f``, its frame-error-adjusted form and the beta-efficiency.

    Raises
    ------
    ValueError
        If ``q`` is zero (efficiency undefined) or any argument is out of range.
    """
    if leak_ir < 0:
        raise ValueError("leakage must be non-negative")
    if n <= 0:
        raise ValueError("frame length must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError(f"efficiency is undefined for q = {q}")
    if not 0.0 <= fer <= 1.0:
        raise ValueError(f"frame error rate outside [0, 1]: {fer}")
    h = binary_entropy(q)
    f = leak_ir / (n * h)
    f_fer = f if fer == 0.0 else (1.0 - fer) * f + fer / h
    return EfficiencyRecord(leak_ir=leak_ir, n=n, q=q, f=f, f_fer=f_fer,
                            beta=beta_from_f(f, q), fer=fer, leak_ev=leak_ev)


def leak_per_bit(f: float, q: float) -> float:
    """Leaked information per processed key bit, ``f * H(q)``.

    A value at or above 1.0 leaves nothing to extract, even asymptotically.
    """
    if f < 0:
        raise ValueError("efficiency must be non-negative")
    return f * binary_entropy(q)


@dataclass
class ReconciliationReport:
    """Per-frame outcome of one reconciliation run."""

    protocol: str
    n: int
    q_true: float
    q_hat: float
    success: bool
    residual_errors: int
    leak_ir: int
    messages: int
    rounds: int
    leak_ev: int = 0
    sim_time: float = 0.0
    wall_time: float = 0.0
    attempts: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def f(self) -> float:
        if self.q_true <= 0:
            return float("nan")
        return self.leak_ir / (self.n * binary_entropy(self.q_true))

    def f_fer(self, fer: float) -> float:
        return efficiency_metrics(self.leak_ir, self.n, self.q_true, fer).f_fer

    def as_row(self) -> dict:
        row = {
            "protocol": self.protocol,
            "n": self.n,
            "q_true": self.q_true,
            "q_hat": self.q_hat,
            "success": int(self.success),
            "residual_errors": self.residual_errors,
            "leak_ir": self.leak_ir,
            "leak_ev": self.leak_ev,
            "messages": self.messages,
            "rounds": self.rounds,
            "attempts": self.attempts,
            "f": self.f,
            "sim_time": self.sim_time,
            "wall_time": self.wall_time,
        }
        return row
