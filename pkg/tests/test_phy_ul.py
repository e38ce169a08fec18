import numpy as np
import pytest

from nbiot.coding import Channel, Scheme, TransportBlock, papr_db
from nbiot.numerology import NUMEROLOGY_3P75KHZ, NUMEROLOGY_15KHZ, SAMPLE_RATE_HZ
from nbiot.phy_ul import (NprachConfig, NpuschAllocation, build_nprach, build_npusch_f1,
                          build_npusch_f2, data_symbol_mask, nprach_hopping, sc_fdma_demodulate,
                          sc_fdma_modulate, slot_samples, tone_bins)
from nbiot.sequences import NpuschFormat


def test_resource_unit_durations():
    def ms(**kw):
        return NpuschAllocation(**kw).ru_duration_s * 1e3
    assert ms(numerology=NUMEROLOGY_15KHZ, tone_count=12) == pytest.approx(1)
    assert ms(numerology=NUMEROLOGY_15KHZ, tone_count=6) == pytest.approx(2)
    assert ms(numerology=NUMEROLOGY_15KHZ, tone_count=3) == pytest.approx(4)
    assert ms(numerology=NUMEROLOGY_15KHZ, tone_count=1) == pytest.approx(8)
    assert ms(numerology=NUMEROLOGY_3P75KHZ, tone_count=1) == pytest.approx(32)
    assert ms(numerology=NUMEROLOGY_15KHZ, format=NpuschFormat.F2) == pytest.approx(2)


def test_peak_allocation_uses_four_ms():
    a = NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=12)
    assert a.resource_units(1000) == 4
    assert a.duration_s(1000) == pytest.approx(4e-3)


def test_allocation_validation():
    with pytest.raises(ValueError):
        NpuschAllocation(NUMEROLOGY_3P75KHZ, tone_count=3)
    with pytest.raises(ValueError):
        NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=12, tone_offset=1)
    with pytest.raises(ValueError):
        NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=1, modulation=Scheme.QPSK)
    with pytest.raises(ValueError):
        NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=1, repetitions=3)


def test_f2_dmrs_middle_three():
    assert data_symbol_mask(NpuschFormat.F2).tolist() == [True, True, False, False, False, True, True]
    assert data_symbol_mask(NpuschFormat.F1).tolist().count(False) == 1


@pytest.mark.parametrize("spacing,n", [(15e3, 12), (3.75e3, 48)])
def test_tone_bins_cover_carrier(spacing, n):
    b = tone_bins(spacing)
    fft = int(SAMPLE_RATE_HZ / spacing)
    freqs = np.where(b < fft // 2, b, b - fft) * spacing
    assert len(set(b.tolist())) == n
    assert freqs.min() == -90e3 and freqs.max() == 90e3 - spacing


@pytest.mark.parametrize("num,tones", [(NUMEROLOGY_15KHZ, 12), (NUMEROLOGY_15KHZ, 3),
                                       (NUMEROLOGY_3P75KHZ, 1)])
def test_sc_fdma_roundtrip(num, tones, rng):
    a = NpuschAllocation(num, tone_count=tones)
    v = rng.standard_normal((3, 7, tones)) + 1j * rng.standard_normal((3, 7, tones))
    x = sc_fdma_modulate(v, a)
    assert x.size == 3 * slot_samples(a)
    assert np.allclose(sc_fdma_demodulate(x, a, 3), v)


def test_slot_lengths():
    assert slot_samples(NpuschAllocation(NUMEROLOGY_15KHZ)) == 960
    assert slot_samples(NpuschAllocation(NUMEROLOGY_3P75KHZ)) == 3840


def test_papr_single_tone_vs_multitone(standalone_cell, rng):
    tb = TransportBlock.random(256, Channel.NPUSCH_F1, rng)
    st = build_npusch_f1(tb, NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=1), standalone_cell)
    mt = build_npusch_f1(tb, NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=12), standalone_cell)
    assert papr_db(st.samples) <= 0.1
    assert papr_db(mt.samples) > papr_db(st.samples) + 3


def test_f2_waveform(standalone_cell):
    w = build_npusch_f2(1, NpuschAllocation(NUMEROLOGY_15KHZ, format=NpuschFormat.F2), standalone_cell)
    assert len(w) == 4 * 960


@pytest.mark.parametrize("fmt,ms", [(0, 5.6), (1, 6.4)])
def test_nprach_duration(fmt, ms):
    cfg = NprachConfig(format=fmt)
    assert cfg.basic_duration_s * 1e3 == pytest.approx(ms, abs=1e-3)
    _, w = build_nprach(cfg, 0)
    assert w.duration_s == pytest.approx(ms * 1e-3)
    assert papr_db(w.samples) < 1e-9


def test_nprach_hopping_structure():
    cfg = NprachConfig(repetitions=8, num_subcarriers=48)
    for start in range(48):
        t = nprach_hopping(cfg, start, seed=3).reshape(-1, 4)
        assert np.all(np.abs(t[:, 1] - t[:, 0]) == 1)
        assert np.all(np.abs(t[:, 2] - t[:, 1]) == 6)
        assert np.all(np.abs(t[:, 3] - t[:, 2]) == 1)
        assert np.all(t // 12 == start // 12)  # stays in its 12-tone block
    # distinct starts never share a tone in the same group
    allt = np.stack([nprach_hopping(cfg, s, 3) for s in range(12)])
    for g in range(allt.shape[1]):
        assert len(set(allt[:, g])) == 12


def test_nprach_capability_partition():
    cfg = NprachConfig(num_subcarriers=24, multitone_partition_boundary=12)
    single, multi = cfg.capability_sets()
    assert list(single) == list(range(12)) and list(multi) == list(range(12, 24))
    assert cfg.signals_multitone(13) and not cfg.signals_multitone(3)
    with pytest.raises(ValueError):
        NprachConfig(num_subcarriers=24, multitone_partition_boundary=5)
