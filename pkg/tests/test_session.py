import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkd_ir.core import ReconciliationReport
from qkd_ir.session import (Direction, Kind, LatencyModel, Message, SessionClosed, WireFormatError,
                            decode_message, decode_uints, encode_message, encode_uints, open_session,
                            replay_leakage, throughput, wire_size)


@given(st.lists(st.integers(0, 1), max_size=300), st.sampled_from(list(Kind)),
       st.sampled_from(list(Direction)))
def test_wire_roundtrip(bits, kind, direction):
    msg = Message(direction, kind, np.array(bits, dtype=np.uint8))
    raw = encode_message(msg)
    assert len(raw) == wire_size(len(bits))
    back = decode_message(raw)
    assert back.kind == kind and back.direction == direction
    assert np.array_equal(back.payload, msg.payload)


def test_wire_layout_is_bit_exact():
    msg = Message(Direction.BOB_TO_ALICE, Kind.REVEAL_VALUES, np.array([1, 1, 0, 1, 0, 0, 0, 0, 1], np.uint8))
    assert encode_message(msg) == bytes([0, 0, 0, 5, 4, 1, 0b00001011, 0b00000001, 1])


@pytest.mark.parametrize("raw", [b"\x00\x00", bytes([0, 0, 0, 9, 1, 0, 0, 0]),
                                 bytes([0, 0, 0, 3, 99, 0, 0]), bytes([0, 0, 0, 3, 1, 0, 9])])
def test_wire_rejects_garbage(raw):
    with pytest.raises(WireFormatError):
        decode_message(raw)


@given(st.lists(st.integers(0, 2 ** 17 - 1), max_size=50))
def test_uint_roundtrip(vals):
    assert decode_uints(encode_uints(vals, 17), 17).tolist() == vals


def test_clock_rounds_and_leakage():
    with open_session(LatencyModel(0.001)) as s:
        s.alice.send(Kind.PARITY_BATCH, [1, 0, 1])
        s.alice.send(Kind.PARITY_BATCH, [1])
        s.bob.receive(Kind.PARITY_BATCH)
        s.bob.receive()
        s.bob.send(Kind.REVEAL_REQUEST, [0] * 40)
        s.alice.receive(Kind.REVEAL_REQUEST)
        s.alice.send(Kind.SYNDROME, [1] * 10, info_bits=6)
        s.bob.receive()
        led = s.ledger
        assert led.messages == 4
        assert led.rounds == 2
        assert led.leaked_bits == 3 + 1 + 6
        assert s.clock == pytest.approx(0.003)
        assert replay_leakage(s.transcript) == led.leaked_bits


def test_bandwidth_adds_serialization_time():
    with open_session(LatencyModel(0.0, bandwidth=1000.0)) as s:
        s.alice.send(Kind.SYNDROME, [0] * 500)
        assert s.clock == pytest.approx(0.5)


def test_closed_session_refuses():
    s = open_session()
    s.close()
    with pytest.raises(SessionClosed):
        s.alice.send(Kind.ACK)


def test_unexpected_kind_raises():
    with open_session() as s:
        s.alice.send(Kind.ACK)
        with pytest.raises(RuntimeError):
            s.bob.receive(Kind.SYNDROME)


def test_info_bits_bounds():
    with open_session() as s:
        with pytest.raises(ValueError):
            s.alice.send(Kind.SYNDROME, [1, 1], info_bits=3)


def test_tcp_and_memory_ledgers_agree():
    def script(s):
        s.alice.send(Kind.PARITY_BATCH, np.arange(37) % 2)
        got = s.bob.receive(Kind.PARITY_BATCH).payload
        s.bob.send(Kind.REVEAL_REQUEST, got[:9])
        s.alice.receive(Kind.REVEAL_REQUEST)
        s.alice.send(Kind.REVEAL_VALUES, [1, 0, 1])
        return s.bob.receive(Kind.REVEAL_VALUES).payload, s.ledger.snapshot(), s.clock

    with open_session(LatencyModel(0.002)) as a, open_session(LatencyModel(0.002), transport="tcp") as b:
        pa, la, ca = script(a)
        pb, lb, cb = script(b)
    assert np.array_equal(pa, pb)
    assert la == lb and ca == cb


def test_throughput_model():
    rep = ReconciliationReport("cascade", 1000, 0.02, 0.02, True, 0, 100, 10, 10)
    assert throughput(rep, LatencyModel(0.0), 0.5) == pytest.approx(2000.0)
    # doubling rounds at most halves latency-dominated throughput
    rep2 = ReconciliationReport("cascade", 1000, 0.02, 0.02, True, 0, 100, 20, 20)
    t1 = throughput(rep, LatencyModel(0.01), 0.0)
    t2 = throughput(rep2, LatencyModel(0.01), 0.0)
    assert t2 == pytest.approx(t1 / 2)
