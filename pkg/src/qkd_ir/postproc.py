"""Error verification, cluster-size optimization and QBER estimation studies.

Frame hierarchy: EC frames (the reconciliation unit) are grouped into
clustered frames that are verified with a single hash tag; clustered frames
make up a full frame for privacy amplification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import binary_entropy, make_rng
from .session import Endpoint, Kind

# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class VerificationParams:
    """Tag length ``t`` and the accepted collision probability."""

    t: int = 50
    p_collision: float = 1e-10

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("tag length must be positive")
        if not 0 < self.p_collision < 1:
            raise ValueError("p_collision must lie in (0, 1)")


@dataclass(frozen=True)
class ClusterPlan:
    k: int
    n: int
    fer: float
    repeats_allowed: int = 0
    full_frame: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.full_frame is not None and self.k * self.n > self.full_frame:
            raise ValueError("cluster does not fit in the full frame")
        if self.repeats_allowed not in (0, 1):
            raise ValueError("repeats_allowed must be 0 or 1")


# ---------------------------------------------------------------- f_eff model


def fer_cluster(fer: float, k: int) -> float:
    """Probability that at least one of ``k`` EC frames is wrong."""
    if not 0.0 <= fer <= 1.0:
        raise ValueError("fer must lie in [0, 1]")
    if k < 1:
        raise ValueError("k must be at least 1")
    return -math.expm1(k * math.log1p(-fer)) if fer < 1.0 else 1.0


def effective_efficiency(f: float, fer: float, k: int, n: int, q: float,
                         params: VerificationParams = VerificationParams(),
                         literal: bool = False) -> float:
    """Efficiency charging reconciliation, cluster failures and verification.

    ``(1 - F_c) f + (F_c + P_coll) / H(q) + t / (k n H(q))`` with
    ``F_c = fer_cluster(fer, k)``.  The tag cost is shared by the ``k``
    frames of a cluster; ``literal=True`` drops the ``1/k`` for comparison.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    h = binary_entropy(q)
    fc = fer_cluster(fer, k)
    tag = params.t / (n * h) if literal else params.t / (k * n * h)
    return (1.0 - fc) * f + (fc + params.p_collision) / h + tag


def effective_efficiency_repeat(f: float, fer: float, k: int, n: int, q: float,
                                params: VerificationParams = VerificationParams()) -> float:
    """f_eff when each failed EC frame may be reconciled once more.

    A frame then fails with probability ``fer**2``; its expected leakage is
    ``(1 + fer) f`` and a cluster containing a failure pays a second tag.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    h = binary_entropy(q)
    fc = fer_cluster(fer, k)
    fc2 = fer_cluster(fer * fer, k)
    return ((1.0 - fc2) * f * (1.0 + fer) + (fc2 + params.p_collision) / h
            + params.t * (1.0 + fc) / (k * n * h))


def optimize_cluster(f_curve, fer: float, n: int, q: float,
                     params: VerificationParams = VerificationParams(),
                     repeats_allowed: int = 0, k_max: int = 64) -> tuple[int, float]:
    """Exhaustive search of the cluster size minimizing f_eff.

    ``f_curve`` is the reconciliation efficiency, a number or a callable of
    ``q``.  With ``repeats_allowed`` a repeat is used only where it helps,
    so the optimum can never be worse than without repeats.  Ties go to the
    smallest ``k``.
    """
    if k_max < 1:
        raise ValueError("empty search range")
    f = float(f_curve(q)) if callable(f_curve) else float(f_curve)
    best_k, best = 0, math.inf
    for k in range(1, k_max + 1):
        val = effective_efficiency(f, fer, k, n, q, params)
        if repeats_allowed:
            val = min(val, effective_efficiency_repeat(f, fer, k, n, q, params))
        if val < best:
            best_k, best = k, val
    return best_k, best


# ---------------------------------------------------------------- hashing


def _poly_mod(a: int, f: int) -> int:
    df = f.bit_length() - 1
    while a.bit_length() - 1 >= df:
        a ^= f << (a.bit_length() - 1 - df)
    return a


def _poly_mulmod(a: int, b: int, f: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> (f.bit_length() - 1) & 1:
            a ^= f
    return r


def _poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _poly_mod(a, b)
    return a


def is_irreducible(f: int) -> bool:
    """Ben-Or test for a polynomial over GF(2) given as an int bit mask."""
    deg = f.bit_length() - 1
    if deg < 1:
        return False
    x = 0b10
    power = x
    for _ in range(deg // 2):
        power = _poly_mulmod(power, power, f)
        if _poly_gcd(f, power ^ x) != 1:
            return False
    return True


def irreducible_polynomial(t: int) -> int:
    """Smallest irreducible polynomial of degree ``t`` (as an int)."""
    for low in range(1, 1 << t, 2):
        f = (1 << t) | low
        if is_irreducible(f):
            return f
    raise ValueError(f"no irreducible polynomial of degree {t}")


@njit(cache=True)
def _horner(chunks, point, poly, t):
    top = np.uint64(1) << np.uint64(t)
    h = np.uint64(0)
    for c in chunks:
        a = h ^ c
        b = point
        r = np.uint64(0)
        for _ in range(t):
            if b & np.uint64(1):
                r ^= a
            b >>= np.uint64(1)
            a <<= np.uint64(1)
            if a & top:
                a ^= poly
        h = r
    return h


class PolynomialHash:
    """Tag = polynomial in a secret point over GF(2^t) with the bit stream
    (split into t-bit chunks, length appended) as coefficients.

    Two different inputs of at most ``L`` chunks collide with probability
    at most ``(L + 1) / 2**t`` over the choice of point.
    """

    def __init__(self, t: int, seed: int = 0):
        if not 1 <= t <= 62:
            raise ValueError("tag length must lie in [1, 62]")
        self.t = t
        self.poly = irreducible_polynomial(t)
        rng = make_rng(seed, 10, t)
        self.point = int(rng.integers(1, 1 << t))

    def chunks(self, bits) -> np.ndarray:
        b = np.asarray(bits, dtype=np.uint64).ravel()
        pad = (-b.size) % self.t
        b = np.concatenate([b, np.zeros(pad, dtype=np.uint64)]).reshape(-1, self.t)
        vals = (b << np.arange(self.t, dtype=np.uint64)).sum(axis=1).astype(np.uint64)
        return np.concatenate([vals, np.array([b.size - pad], dtype=np.uint64)])

    def tag(self, bits) -> int:
        return int(_horner(self.chunks(bits), np.uint64(self.point), np.uint64(self.poly), self.t))

    def collision_bound(self, n_bits: int) -> float:
        return (math.ceil(n_bits / self.t) + 1) / 2.0 ** self.t


def verify_cluster(alice_frames, bob_frames, params: VerificationParams = VerificationParams(),
                   seed: int = 0, alice: Endpoint | None = None, bob: Endpoint | None = None):
    """Compare t-bit tags of the concatenated cluster on both sides.

    Returns ``(passed, leak_ev)`` with ``leak_ev = t``.  With endpoints the
    tag travels as a VERIFY_TAG message (booked as leakage) and Bob answers
    with an ACK carrying the verdict.
    """
    if len(alice_frames) == 0:
        raise ValueError("empty cluster")
    if len(alice_frames) != len(bob_frames):
        raise ValueError("clusters must hold the same number of frames")
    xa = [np.asarray(getattr(f, "bits", f), dtype=np.uint8) for f in alice_frames]
    xb = [np.asarray(getattr(f, "bits", f), dtype=np.uint8) for f in bob_frames]
    if any(a.size != b.size for a, b in zip(xa, xb)):
        raise ValueError("frame lengths differ")
    hasher = PolynomialHash(params.t, seed)
    ta = hasher.tag(np.concatenate(xa))
    tb = hasher.tag(np.concatenate(xb))
    if alice is not None and bob is not None:
        tag_bits = (np.uint64(ta) >> np.arange(params.t, dtype=np.uint64)) & np.uint64(1)
        alice.send(Kind.VERIFY_TAG, tag_bits.astype(np.uint8))
        got = bob.receive(Kind.VERIFY_TAG).payload
        ta = int((got.astype(np.uint64) << np.arange(params.t, dtype=np.uint64)).sum())
        bob.send(Kind.ACK, np.array([int(ta == tb)], dtype=np.uint8))
        alice.receive(Kind.ACK)
    return ta == tb, params.t


# ---------------------------------------------------------------- QBER estimation


@dataclass(frozen=True)
class DriftProcess:
    """Mean-reverting random walk of the QBER over transmitted bits.

    ``q`` follows an Ornstein-Uhlenbeck process in bit time with diffusion
    ``sigma`` per square-root bit and reversion rate ``theta`` per bit,
    evaluated on chunks of ``chunk`` bits and kept inside ``[q_min, q_max]``.
    """

    q_mean: float = 0.03
    sigma: float = 4e-6
    theta: float = 2e-7
    chunk: int = 1024
    q_min: float = 0.005
    q_max: float = 0.2


@dataclass
class QberTrajectory:
    """Per-chunk true QBER and observed error counts."""

    chunk: int
    q: np.ndarray
    errors: np.ndarray

    @property
    def n_bits(self) -> int:
        return self.chunk * self.q.size


def drift_trajectory(n_bits: int, process: DriftProcess = DriftProcess(), seed: int = 0) -> QberTrajectory:
    n_chunks = n_bits // process.chunk
    if n_chunks < 1:
        raise ValueError("trajectory shorter than one chunk")
    rng = make_rng(seed, 12)
    a = math.exp(-process.theta * process.chunk)
    noise = process.sigma * math.sqrt(process.chunk) * rng.standard_normal(n_chunks)
    q = np.empty(n_chunks)
    cur = process.q_mean
    for i in range(n_chunks):
        cur = process.q_mean + a * (cur - process.q_mean) + noise[i]
        cur = min(max(cur, process.q_min), process.q_max)
        q[i] = cur
    errors = rng.binomial(process.chunk, q)
    return QberTrajectory(process.chunk, q, errors)


@dataclass(frozen=True)
class EstimatorStudyConfig:
    block_sizes: tuple = tuple(1024 * 2 ** i for i in range(0, 11))
    parallelism: tuple = (1, 2, 4)

    def __post_init__(self):
        if not self.block_sizes or any(b <= 0 for b in self.block_sizes):
            raise ValueError("block sizes must be positive")
        if any(p not in (1, 2, 4) for p in self.parallelism):
            raise ValueError("parallelism must be 1, 2 or 4")


def qber_estimator_study(traj: QberTrajectory, cfg: EstimatorStudyConfig = EstimatorStudyConfig()):
    """Error of the previous-frame estimate for each block size and lag.

    The error stream is cut into blocks of ``b`` bits; block ``i`` yields the
    estimate ``q_i``, used for block ``i + P`` (``P`` frames in flight).  The
    prediction is scored against the true mean QBER of the target block.

    Returns a list of dicts ``block_size, parallelism, mae, rmse, samples``.
    """
    rows = []
    for b in cfg.block_sizes:
        if b % traj.chunk:
            raise ValueError(f"block size {b} is not a multiple of the chunk size {traj.chunk}")
        c = b // traj.chunk
        nb = traj.q.size // c
        if nb < 2 + max(cfg.parallelism):
            raise ValueError(f"trajectory too short for block size {b}")
        est = traj.errors[:nb * c].reshape(nb, c).sum(axis=1) / b
        true = traj.q[:nb * c].reshape(nb, c).mean(axis=1)
        for P in cfg.parallelism:
            err = est[:-P] - true[P:]
            rows.append({"block_size": b, "parallelism": P,
                         "mae": float(np.mean(np.abs(err))),
                         "rmse": float(np.sqrt(np.mean(err ** 2))),
                         "samples": int(err.size)})
    return rows
