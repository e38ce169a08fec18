import math

import pytest
from hypothesis import given, strategies as st

from nbiot import ConfigurationError
from nbiot.numerology import (LTE_PRBS, NUMEROLOGY_3P75KHZ, NUMEROLOGY_15KHZ, SAMPLES_PER_SUBFRAME,
                              DeploymentConfig, DeploymentMode, TimingPosition,
                              anchor_prb_candidates, cp_lengths, distance_to_raster_hz,
                              guardband_anchor_candidates, is_middle_prb, prb_center_offset_hz,
                              raster_hypotheses, raster_offset, symbol_starts, timing_advance,
                              useful_starts)


def test_numerology_constants():
    assert NUMEROLOGY_15KHZ.tone_count == 12
    assert NUMEROLOGY_3P75KHZ.tone_count == 48
    assert NUMEROLOGY_15KHZ.fft_size == 128
    assert NUMEROLOGY_3P75KHZ.fft_size == 512
    assert NUMEROLOGY_3P75KHZ.slot_duration_s == 4 * NUMEROLOGY_15KHZ.slot_duration_s


def test_cp_layout_fills_a_subframe():
    assert cp_lengths() == [10, 9, 9, 9, 9, 9, 9]
    assert sum(cp_lengths()) * 2 + 14 * 128 == SAMPLES_PER_SUBFRAME
    starts = symbol_starts()
    assert starts[0] == 0 and starts[7] == 960
    assert useful_starts()[0] == 10


def _brute_center(prb, bw):
    # oracle: subcarrier index relative to DC, DC itself unused
    n = LTE_PRBS[bw]
    first = -6 * n  # lowest subcarrier index (negative half)
    ks = [first + 12 * prb + i for i in range(12)]
    ks = [k if k < 0 else k + 1 for k in ks]  # skip DC
    return sum(ks) / 12 * 15e3


@pytest.mark.parametrize("bw", sorted(LTE_PRBS))
def test_prb_center_matches_subcarrier_oracle(bw):
    for prb in range(LTE_PRBS[bw]):
        assert prb_center_offset_hz(prb, bw) == pytest.approx(_brute_center(prb, bw), abs=1e-6)


def test_anchor_candidates_10mhz():
    assert anchor_prb_candidates(10) == [4, 9, 14, 19, 30, 35, 40, 45]


@pytest.mark.parametrize("bw,mag", [(3, 7500), (5, 7500), (15, 7500), (10, 2500), (20, 2500)])
def test_anchor_offsets(bw, mag):
    cands = anchor_prb_candidates(bw)
    assert cands
    for p in cands:
        assert abs(distance_to_raster_hz(prb_center_offset_hz(p, bw))) == pytest.approx(mag)
        assert not is_middle_prb(p, bw)


def test_bad_bandwidth():
    with pytest.raises(ConfigurationError):
        anchor_prb_candidates(7)


def test_guardband_slots_inside_channel():
    for bw in (10, 15, 20):
        for p in guardband_anchor_candidates(bw):
            c = prb_center_offset_hz(p, bw)
            assert abs(c) + 90e3 <= bw * 1e6 / 2
            assert abs(distance_to_raster_hz(c)) <= 7.5e3 + 1e-6


def test_guardband_narrow_bandwidths_have_no_slot():
    # 3 and 5 MHz leave no 180 kHz slot near the raster inside the channel
    assert guardband_anchor_candidates(3) == []
    with pytest.raises(ConfigurationError):
        DeploymentConfig(DeploymentMode.GUARDBAND, lte_bandwidth_mhz=3)


def test_deployment_validation():
    with pytest.raises(ConfigurationError):
        DeploymentConfig(DeploymentMode.INBAND, lte_bandwidth_mhz=10, prb_index=25)
    d = DeploymentConfig(DeploymentMode.INBAND, lte_bandwidth_mhz=10, prb_index=25, is_anchor=False)
    assert d.prb_index == 25


def test_raster_offset_and_hypotheses():
    d = DeploymentConfig(DeploymentMode.INBAND, lte_bandwidth_mhz=10, prb_index=30)
    assert raster_offset(d) == pytest.approx(-2500.0)
    assert raster_offset(DeploymentConfig()) == 0.0
    assert raster_hypotheses() == [0.0, 2500.0, -2500.0, 7500.0, -7500.0]
    assert raster_hypotheses(DeploymentConfig()) == [0.0]
    assert raster_offset(d) in raster_hypotheses(d)


@given(st.integers(0, 10239), st.integers(0, 5000))
def test_timing_advance_wraps(start, n):
    pos = TimingPosition.from_absolute(start)
    adv = timing_advance(pos, n)
    assert adv.absolute_subframe == (start + n) % 10240


def test_timing_position_bounds():
    with pytest.raises(ConfigurationError):
        TimingPosition(1024, 0)
    with pytest.raises(ConfigurationError):
        TimingPosition(0, 10)
    with pytest.raises(ValueError):
        timing_advance(TimingPosition(), -1)


@given(st.floats(-1e7, 1e7, allow_nan=False))
def test_raster_distance_bounded(x):
    d = distance_to_raster_hz(x)
    assert abs(d) <= 50e3 + 1e-6
    assert math.isclose((x - d) / 100e3, round((x - d) / 100e3), abs_tol=1e-6)
