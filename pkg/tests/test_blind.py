from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkd_ir.blind import (BlindConfig, NothingToReveal, RateAdaptationPlan, adapted_rate,
                          blind_reconcile, convert_punctured_to_shortened, reveal_count)
from qkd_ir.core import BitFrame, ChannelParams, transmit_bsc
from qkd_ir.ldpc.codeset import CodeSet, ManifestError
from qkd_ir.ldpc.peg import peg_construct
from qkd_ir.session import Kind, open_session, replay_leakage


def test_adapted_rate_exact():
    assert adapted_rate(65536, 16384, 0, 0) == Fraction(49152, 65536)
    assert adapted_rate(65536, 16384, 4000, 0) == Fraction(49152, 61536)
    assert float(adapted_rate(65536, 16384, 4000, 0)) == pytest.approx(0.7988, abs=5e-5)
    assert adapted_rate(65536, 16384, 0, 4000) == Fraction(45152, 61536)
    assert float(adapted_rate(65536, 16384, 0, 4000)) == pytest.approx(0.7337, abs=5e-5)
    with pytest.raises(ValueError):
        adapted_rate(10, 5, 6, 4)


@given(st.integers(100, 10 ** 5), st.integers(1, 99), st.integers(0, 100))
def test_adapted_rate_matches_float_formula(N, m_pct, p_pct):
    m = N * m_pct // 100
    d = N // 10
    p = d * p_pct // 100
    s = d - p
    val = adapted_rate(N, m, p, s)
    assert float(val) == pytest.approx((N - m - s) / (N - p - s), rel=1e-12)


def test_reveal_count_reference():
    assert reveal_count(61536, 0.8, 1) == 739
    assert reveal_count(61536, Fraction(4, 5)) == 739
    with pytest.raises(ValueError):
        reveal_count(100, 0.8, 0)
    with pytest.raises(ValueError):
        reveal_count(100, 1.4)


@given(st.integers(1, 10 ** 6), st.fractions(Fraction(1, 100), Fraction(99, 100)),
       st.fractions(Fraction(1, 10), Fraction(3)))
def test_reveal_count_is_exact_ceiling(n, R, alpha):
    exact = n * (Fraction(28, 1000) - Fraction(2, 100) * R) * alpha
    v = reveal_count(n, R, alpha)
    assert v - 1 < exact <= v


def test_plan_bookkeeping():
    plan = RateAdaptationPlan(np.array([3, 7, 9, 12]))
    assert (plan.d, plan.p, plan.s) == (4, 4, 0)
    plan.shorten([7, 12])
    assert (plan.p, plan.s) == (2, 2) and plan.p + plan.s == plan.d
    with pytest.raises(ValueError):
        plan.shorten([7])
    with pytest.raises(ValueError):
        RateAdaptationPlan(np.array([1, 1]))


def test_convert_takes_least_reliable_punctured():
    rng = np.random.default_rng(0)
    post = rng.normal(0, 3, 100)
    plan = RateAdaptationPlan(np.arange(0, 100, 5))
    key = np.setdiff1d(np.arange(100), plan.positions)
    from_p, from_k = convert_punctured_to_shortened(plan, post, 6, key, np.zeros(key.size, bool))
    assert from_k.size == 0 and from_p.size == 6
    rest = np.setdiff1d(plan.punctured, from_p)
    assert np.abs(post[from_p]).max() <= np.abs(post[rest]).min()


def test_convert_reveals_key_bits_when_nothing_punctured():
    plan = RateAdaptationPlan(np.array([0, 1]))
    plan.shorten([0, 1])
    key = np.arange(2, 30)
    post = np.linspace(-3, 3, 30)
    revealed = np.zeros(key.size, bool)
    from_p, from_k = convert_punctured_to_shortened(plan, post, 10, key, revealed)
    assert from_p.size == 0 and from_k.size == 10
    revealed[:] = True
    with pytest.raises(NothingToReveal):
        convert_punctured_to_shortened(plan, post, 10, key, revealed)


def test_convert_mixed_round():
    plan = RateAdaptationPlan(np.array([0, 1, 2]))
    key = np.arange(3, 20)
    post = np.arange(20, dtype=float)
    from_p, from_k = convert_punctured_to_shortened(plan, post, 5, key, np.zeros(key.size, bool))
    assert from_p.tolist() == [0, 1, 2] and from_k.tolist() == [3, 4]


def test_config_validation():
    with pytest.raises(ValueError):
        BlindConfig(alpha=0)
    with pytest.raises(ValueError):
        BlindConfig(reveal_rate="current")


@pytest.fixture(scope="module")
def tiny_set():
    N = 600
    d = 60
    codes = [peg_construct(N, {2: 0.25, 3: 0.45, 8: 0.3}, m, seed=m) for m in (150, 240, 330)]
    rng = np.random.default_rng(1)
    mods = [np.sort(rng.choice(N, d, replace=False)) for _ in codes]
    return CodeSet(N=N, d=d, f_design=1.1, codes=codes, modulated=mods, q_design=[0.02, 0.05, 0.09])


def test_code_set_invariants(tiny_set):
    assert tiny_set.n == 540
    with pytest.raises(ManifestError):
        CodeSet(N=600, d=60, f_design=1.1, codes=tiny_set.codes[::-1],
                modulated=tiny_set.modulated, q_design=[0, 0, 0])
    table = tiny_set.selection_table()
    assert [i for _, i in table] == [0, 1, 2]
    assert all(a[0] < b[0] for a, b in zip(table, table[1:]))
    for q_up, i in table[:-1]:
        assert tiny_set.select(q_up * 0.999) <= i < tiny_set.select(q_up * 1.001) + 1


def _blind(cs, q, q_hat, seed=0, cfg=None):
    x = BitFrame.random(cs.n, seed)
    y = transmit_bsc(x, ChannelParams(q, seed))
    with open_session() as s:
        rep, out = blind_reconcile(s.alice, s.bob, x, y, q_hat, cs, cfg or BlindConfig(seed=seed),
                                   return_frame=True)
        return rep, out, x, list(s.transcript), s.ledger.snapshot()


def test_noiseless_single_message(tiny_set):
    rep, out, x, tr, _ = _blind(tiny_set, 0.0, 0.01)
    assert rep.success and rep.messages == 1 and rep.attempts == 1
    assert [m.kind for m in tr] == [Kind.SYNDROME]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.01, 0.03, 0.06]), st.sampled_from([0.01, 0.03, 0.08]))
def test_protocol_properties(tiny_set, seed, q, q_hat):
    rep, out, x, tr, led = _blind(tiny_set, q, q_hat, seed)
    ex = rep.extra
    # p + s = d, leak formula equals the booked key information
    assert ex["p_final"] + ex["s_final"] == tiny_set.d
    assert rep.leak_ir == ex["leak_formula"] == replay_leakage(tr) == led.leaked_bits
    assert rep.success == bool(np.array_equal(out.bits, x.bits))
    # one syndrome, then a request/answer pair before every further decode
    assert rep.messages == 2 * rep.attempts - 1


def test_abort_on_give_up_threshold(tiny_set):
    rep, *_ = _blind(tiny_set, 0.12, 0.01, seed=2, cfg=BlindConfig(f_max=1.0))
    assert rep.extra["aborted"] and not rep.success
    assert rep.residual_errors > 0


def test_one_shot_mode(tiny_set):
    rep, _, _, tr, _ = _blind(tiny_set, 0.08, 0.02, seed=1, cfg=BlindConfig(max_rounds=0))
    assert rep.messages == 1 and rep.attempts == 1


def test_frame_length_checked(tiny_set):
    with open_session() as s:
        with pytest.raises(ValueError):
            blind_reconcile(s.alice, s.bob, BitFrame.random(10, 0), BitFrame.random(10, 0), 0.02, tiny_set)
