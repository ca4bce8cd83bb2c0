"""Blind reconciliation: rate adaptation by turning punctured positions into
shortened ones until the syndrome decoder succeeds.

Alice embeds her ``n`` key bits into an ``N``-bit word whose ``d`` modulated
positions start punctured (random filler unknown to Bob) and sends the
syndrome.  After each failed decode Bob asks for the values of ``v``
positions he is least sure about: punctured positions while any remain,
key bits afterwards.  Known values enter the decoder as saturated LLRs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import BitFrame, ReconciliationReport, binary_entropy, make_rng
from .ldpc.codeset import CodeSet, _inverse_entropy
from .ldpc.decoder import SATURATION, bsc_llr, spa_decode
from .session import Endpoint, Kind, decode_uints, encode_uints


class NothingToReveal(RuntimeError):
    """Every modulated position is shortened and every key bit revealed."""


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def adapted_rate(N: int, m: int, p: int, s: int) -> Fraction:
    """Rate ``(N - m - s) / (N - p - s)`` of a code with ``p`` punctured and
    ``s`` shortened positions, as an exact fraction."""
    den = N - p - s
    if den <= 0:
        raise ValueError(f"non-positive denominator N - p - s = {den}")
    return Fraction(N - m - s, den)


def reveal_count(n: int, R, alpha=1) -> int:
    """Positions requested per round, ``ceil(n (0.028 - 0.02 R) alpha)``."""
    R, alpha = _exact(R), _exact(alpha)
    if not 0 < R < 1:
        raise ValueError(f"rate must lie in (0, 1), got {R}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return math.ceil(n * (Fraction(28, 1000) - Fraction(2, 100) * R) * alpha)


@dataclass
class RateAdaptationPlan:
    """Bookkeeping of the ``d`` modulated positions of one frame."""

    positions: np.ndarray
    punctured: np.ndarray = None
    shortened: list = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if np.unique(self.positions).size != self.positions.size:
            raise ValueError("modulated positions must be distinct")
        if self.punctured is None:
            self.punctured = self.positions.copy()

    @property
    def d(self) -> int:
        return int(self.positions.size)

    @property
    def p(self) -> int:
        return int(self.punctured.size)

    @property
    def s(self) -> int:
        return self.d - self.p

    def shorten(self, chosen) -> None:
        chosen = np.asarray(chosen, dtype=np.int64)
        keep = ~np.isin(self.punctured, chosen)
        if self.p - int(keep.sum()) != chosen.size:
            raise ValueError("can only shorten currently punctured positions")
        self.punctured = self.punctured[keep]
        self.shortened.extend(chosen.tolist())


def convert_punctured_to_shortened(plan: RateAdaptationPlan, posteriors, v: int,
                                   key_positions, revealed_mask) -> tuple[np.ndarray, np.ndarray]:
    """Choose the positions to ask Alice about after a failed decode.

    Returns ``(from_punctured, from_key)``: up to ``v`` punctured positions
    with the smallest ``|posterior|``, topped up with the least reliable
    unrevealed key positions once no punctured positions remain.

    Raises
    ------
    NothingToReveal
        When neither punctured nor unrevealed key positions are left.
    """
    mag = np.abs(np.asarray(posteriors, dtype=float))
    pun = plan.punctured
    take = min(v, pun.size)
    if take:
        order = np.argsort(mag[pun], kind="stable")[:take]
        from_p = np.sort(pun[order])
    else:
        from_p = np.zeros(0, dtype=np.int64)
    rest = v - take
    if rest:
        cand = np.asarray(key_positions)[~revealed_mask]
        if cand.size == 0 and take == 0:
            raise NothingToReveal("no positions left to reveal")
        order = np.argsort(mag[cand], kind="stable")[:rest]
        from_k = np.sort(cand[order])
    else:
        from_k = np.zeros(0, dtype=np.int64)
    return from_p, from_k


@dataclass(frozen=True)
class BlindConfig:
    """Parameters of the Blind protocol.

    ``max_rounds = 0`` gives the one-shot rate-adaptive mode (no reveal
    rounds, a failed decode is a frame error).  ``reveal_rate`` selects
    whether ``v`` uses the base rate (constant per session) or the current
    adapted rate.
    """

    alpha: float = 1.0
    f_max: float = 3.0
    max_iterations: int = 50
    max_rounds: int | None = None
    reveal_rate: str = "base"
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")
        if self.reveal_rate not in ("base", "adapted"):
            raise ValueError("reveal_rate must be 'base' or 'adapted'")


def decoder_qber(code_set: CodeSet, index: int) -> float:
    """QBER whose channel LLR the decoder uses for code ``index``.

    Derived from the code itself (the QBER its fully punctured rate is sized
    for), not from the estimate, so runs that pick the same code behave
    identically.
    """
    h = (1.0 - code_set.punctured_rate(index)) / code_set.f_design
    return _inverse_entropy(min(max(h, 1e-9), 1.0))


def _addr_width(N: int) -> int:
    return max(1, int(N).bit_length())


def blind_reconcile(alice: Endpoint, bob: Endpoint, x: BitFrame, y: BitFrame, q_hat: float,
                    code_set: CodeSet, cfg: BlindConfig | None = None,
                    q_true: float | None = None, return_frame: bool = False):
    """Run Blind reconciliation of one frame over a session.

    ``x`` and ``y`` must have length ``n = N - d`` of the code set.  The
    report's ``leak_ir`` is the key information booked in the session
    ledger, equal to ``m - p_final + k_revealed``.
    """
    cfg = cfg or BlindConfig()
    n = code_set.n
    if x.length != n or y.length != n:
        raise ValueError(f"frames must have length n = N - d = {n}")
    session = alice.session
    start = session.ledger.snapshot()
    start_clock = session.clock
    t0 = time.perf_counter()

    idx = code_set.select(q_hat)
    H = code_set.codes[idx]
    N, m = H.N, H.m
    plan = RateAdaptationPlan(code_set.modulated[idx])
    key_pos = np.setdiff1d(np.arange(N), plan.positions)
    base_R = Fraction(N - m, N)
    v_base = reveal_count(n, base_R, cfg.alpha)

    # Alice: extended word with random filler on modulated positions
    rng = make_rng(cfg.seed, 9, x.frame_index)
    xa = np.empty(N, dtype=np.uint8)
    xa[key_pos] = x.bits
    xa[plan.positions] = rng.integers(0, 2, plan.d, dtype=np.uint8)
    alice.send(Kind.SYNDROME, H.syndrome(xa), info_bits=m - plan.d)
    syn = bob.receive(Kind.SYNDROME).payload

    # Bob: channel LLRs, zero for punctured positions
    q_dec = decoder_qber(code_set, idx)
    L = bsc_llr(q_dec)
    llr = np.zeros(N)
    llr[key_pos] = np.where(y.bits == 0, L, -L)
    revealed = np.zeros(n, dtype=bool)
    key_index = np.full(N, -1, dtype=np.int64)
    key_index[key_pos] = np.arange(n)
    k_revealed = 0
    # cap sized by the chosen code, not by q_hat, keeping the run blind to it
    give_up = cfg.f_max * n * binary_entropy(q_dec)
    w = _addr_width(N)
    attempts = 0
    aborted = False
    rounds_done = 0
    while True:
        attempts += 1
        res = spa_decode(H, llr, syn, cfg.max_iterations)
        if res.converged:
            break
        leak = (m - plan.p) + k_revealed
        if cfg.max_rounds is not None and rounds_done >= cfg.max_rounds:
            aborted = True
            break
        if leak >= give_up:
            aborted = True
            break
        if cfg.reveal_rate == "adapted":
            v = reveal_count(n, adapted_rate(N, m, plan.p, plan.s), cfg.alpha)
        else:
            v = v_base
        try:
            from_p, from_k = convert_punctured_to_shortened(plan, res.posteriors, v, key_pos, revealed)
        except NothingToReveal:
            aborted = True
            break
        asked = np.concatenate([from_p, from_k])
        bob.send(Kind.REVEAL_REQUEST, encode_uints(asked, w))
        req = decode_uints(alice.receive(Kind.REVEAL_REQUEST).payload, w)
        alice.send(Kind.REVEAL_VALUES, xa[req])
        vals = bob.receive(Kind.REVEAL_VALUES).payload
        llr[asked] = np.where(vals == 0, SATURATION, -SATURATION)
        plan.shorten(from_p)
        if from_k.size:
            revealed[key_index[from_k]] = True
            k_revealed += int(from_k.size)
        rounds_done += 1

    xhat = res.hard_decision[key_pos].astype(np.uint8)
    if aborted:
        xhat = y.bits.copy()
    residual = int(np.count_nonzero(xhat != x.bits))
    led = session.ledger
    leak = led.leaked_bits - start.leaked_bits
    errors_before = int(np.count_nonzero(x.bits != y.bits))
    report = ReconciliationReport(
        protocol="blind",
        n=n,
        q_true=errors_before / n if q_true is None else q_true,
        q_hat=q_hat,
        success=(not aborted) and residual == 0,
        residual_errors=residual,
        leak_ir=int(leak),
        messages=led.messages - start.messages,
        rounds=led.rounds - start.rounds,
        sim_time=session.clock - start_clock,
        wall_time=time.perf_counter() - t0,
        attempts=attempts,
        extra={"code_index": idx, "p_final": plan.p, "s_final": plan.s,
               "k_revealed": k_revealed, "aborted": aborted, "v": v_base,
               "leak_formula": m - plan.p + k_revealed},
    )
    if return_frame:
        return report, y.with_bits(xhat)
    return report
