import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbiot.coding import (DL_TBS, UL_TBS, Channel, Scheme, TransportBlock, demodulate, modulate,
                          papr_db, rate_match, repetition_decode, repetition_encode,
                          tbcc_encode, turbo_decode, turbo_encode, viterbi_decode)
from nbiot.coding import tbcc, turbo
from nbiot.coding.crc import CRC16, CRC24A, attach_crc, check_crc, crc_bits
from nbiot.coding.ratematch import circular_indices, subblock_permutation


def _crc_oracle(bits, poly):
    deg = poly.bit_length() - 1
    reg = 0
    for b in list(bits) + [0] * deg:
        reg = (reg << 1) | int(b)
        if reg >> deg:
            reg ^= poly
    return np.array([(reg >> (deg - 1 - i)) & 1 for i in range(deg)])


@pytest.mark.parametrize("poly", [CRC24A, CRC16])
def test_crc_matches_division_oracle(poly, rng):
    for n in (1, 16, 100, 680):
        bits = rng.integers(0, 2, n)
        assert np.array_equal(crc_bits(bits, poly), _crc_oracle(bits, poly))
        c = attach_crc(bits, poly)
        assert check_crc(c, poly)
        c[n // 2] ^= 1
        assert not check_crc(c, poly)


def _tbcc_oracle(bits):
    # shift register holding the last six inputs, initialised from the block tail
    reg = list(bits[-6:][::-1])  # reg[0] = most recent
    out = []
    for u in bits:
        window = [int(u)] + reg
        row = []
        for g in (0o133, 0o171, 0o165):
            taps = [(g >> (6 - i)) & 1 for i in range(7)]
            row.append(sum(t * w for t, w in zip(taps, window)) % 2)
        out.append(row)
        reg = [int(u)] + reg[:-1]
    return np.array(out).T


def test_tbcc_matches_shift_register_oracle(rng):
    for _ in range(20):
        bits = rng.integers(0, 2, int(rng.integers(6, 120))).astype(np.uint8)
        streams, start, end = tbcc.encode_streams(bits)
        assert np.array_equal(streams, _tbcc_oracle(bits))


def test_tbcc_tail_biting_state_property(rng):
    for _ in range(100):
        bits = rng.integers(0, 2, int(rng.integers(6, 400))).astype(np.uint8)
        _, start, end = tbcc.encode_streams(bits)
        assert start == end


@pytest.mark.parametrize("tbs", DL_TBS)
def test_tbcc_roundtrip_every_tbs(tbs, rng):
    tb = TransportBlock.random(tbs, Channel.NPDSCH, rng)
    e = 3 * (tbs + 24) + 37
    llr = 1.0 - 2.0 * rate_match(tbcc_encode(tb), e)
    dec, ok = viterbi_decode(llr, tbs)
    assert ok and np.array_equal(dec.payload_bits, tb.payload_bits)


@pytest.mark.parametrize("tbs", UL_TBS)
def test_turbo_roundtrip_every_tbs(tbs, rng):
    tb = TransportBlock.random(tbs, Channel.NPUSCH_F1, rng)
    coded = turbo_encode(tb)
    llr = 4.0 * (1.0 - 2.0 * rate_match(coded, coded.buffer_length))
    dec, ok = turbo_decode(llr, tbs)
    assert ok and np.array_equal(dec.payload_bits, tb.payload_bits)


def test_turbo_corrects_noise(rng):
    tb = TransportBlock.random(256, Channel.NPUSCH_F1, rng)
    x = 1.0 - 2.0 * rate_match(turbo_encode(tb), 3 * 284)
    y = x + rng.normal(0, 0.8, x.size)
    dec, ok = turbo_decode(2 * y / 0.64, 256)
    assert ok and np.array_equal(dec.payload_bits, tb.payload_bits)


def test_qpp_is_permutation():
    for k in turbo.QPP_PARAMETERS:
        p = turbo.qpp_interleaver(k)
        assert sorted(p.tolist()) == list(range(k))
    # every ladder TBS plus its CRC has an interleaver
    assert {t + 24 for t in UL_TBS} <= set(turbo.QPP_PARAMETERS)
    with pytest.raises(ValueError):
        turbo.qpp_interleaver(41)


def test_subblock_permutation_and_circular_buffer():
    assert sorted(subblock_permutation(32).tolist()) == list(range(32))
    idx = circular_indices(30, 70)
    assert idx.size == 70 and set(idx.tolist()) == set(range(30))


@given(st.integers(0, 1), st.integers(1, 64))
def test_repetition_majority(bit, factor):
    coded = repetition_encode(bit, factor)
    assert repetition_decode(1.0 - 2.0 * coded.bits) == bit


def test_repetition_majority_with_minority_flips():
    llr = np.array([1, 1, -1, 1, -1, 1, 1], float)  # 5 of 7 say zero
    assert repetition_decode(llr) == 0


@pytest.mark.parametrize("scheme", list(Scheme))
def test_modulation_roundtrip(scheme, rng):
    bits = rng.integers(0, 2, 64)
    s = modulate(bits, scheme)
    assert np.allclose(np.abs(s), 1)
    llr = demodulate(s, scheme, 0.1)
    assert np.array_equal((llr < 0).astype(int), bits)


def test_pi2_bpsk_alternates_axes():
    s = modulate(np.zeros(4), Scheme.PI2_BPSK)
    assert np.allclose(s, [1, 1j, 1, 1j])


def test_transport_block_limits():
    with pytest.raises(ValueError):
        TransportBlock(np.zeros(681), Channel.NPDSCH)
    with pytest.raises(ValueError):
        TransportBlock(np.zeros(22), Channel.NPDCCH)
    assert TransportBlock(np.zeros(1000), Channel.NPUSCH_F1).tbs == 1000


def test_papr_constant_envelope():
    assert papr_db(np.exp(1j * np.linspace(0, 10, 100))) == pytest.approx(0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=6, max_size=200))
def test_tbcc_noiseless_decode_property(bits):
    bits = np.array(bits, np.uint8)
    streams, _, _ = tbcc.encode_streams(bits)
    assert np.array_equal(tbcc.viterbi_streams(1.0 - 2.0 * streams), bits)
