import numpy as np
import pytest

from nbiot.channel import ChannelSpec, apply, compose_cfo, drift_from_cfo, impair, resample
from nbiot.waveform import Waveform, ofdm_demodulate, ofdm_modulate, read_iq, write_iq


def test_drift_example():
    assert drift_from_cfo(7.5e3, 900e6, 0.64) * 1e6 == pytest.approx(5.333, abs=0.01)
    with pytest.raises(ValueError):
        drift_from_cfo(1.0, 0.0, 1.0)


def test_compose_cfo():
    assert compose_cfo(20, 900e6, 7500) == pytest.approx(25500)


def test_noise_variance_definition(rng):
    spec = ChannelSpec(snr_db=0, seed=3)
    y = impair(np.zeros(200000, complex), spec)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, rel=0.02)
    inband = ChannelSpec(snr_db=0, noise_bandwidth_hz=180e3)
    assert inband.noise_variance(1.92e6) == pytest.approx(1.92e6 / 180e3)


def test_cfo_rotation_and_sample_index():
    x = np.ones(1000, complex)
    y = impair(x, ChannelSpec(cfo_hz=1000.0))
    assert np.allclose(y, np.exp(2j * np.pi * 1000 * np.arange(1000) / 1.92e6))
    y2 = impair(x, ChannelSpec(cfo_hz=1000.0), start_sample=500)
    assert np.allclose(y2, np.exp(2j * np.pi * 1000 * (500 + np.arange(1000)) / 1.92e6))


def test_integer_delay_is_exact(rng):
    x = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    y = impair(x, ChannelSpec(delay_samples=7))
    assert np.allclose(y[7:], x[:-7]) and np.allclose(y[:7], 0)


def test_fractional_delay_tone_phase():
    n = np.arange(4000)
    f = 0.01
    x = np.exp(2j * np.pi * f * n)
    y = resample(x, 2.5, 0.0)
    ref = np.exp(2j * np.pi * f * (n - 2.5))
    assert np.abs(y[100:-100] - ref[100:-100]).max() < 1e-3


def test_coupling_loss(rng):
    x = rng.standard_normal(1000) + 0j
    y = impair(x, ChannelSpec(coupling_loss_db=20))
    assert np.allclose(y, x / 10)
    with pytest.raises(ValueError):
        ChannelSpec(coupling_loss_db=-1)


def test_link_budget_constructor():
    spec = ChannelSpec.from_link_budget(23, 150, 5, 180e3)
    # 23 - 150 - (-174 + 52.55 + 5) = -10.55 dB
    assert spec.snr_db - spec.coupling_loss_db == pytest.approx(-10.55, abs=0.01)


def test_apply_keeps_metadata():
    w = Waveform(np.ones(10, complex), carrier_offset_hz=5.0)
    out = apply(w, ChannelSpec(cfo_hz=0))
    assert out.sample_rate == w.sample_rate and len(out) == 10


def test_ofdm_roundtrip(rng):
    g = rng.standard_normal((3, 12, 14)) + 1j * rng.standard_normal((3, 12, 14))
    x = ofdm_modulate(g)
    assert x.size == 3 * 1920
    assert np.allclose(ofdm_demodulate(x, 3), g)


def test_iq_roundtrip(tmp_path, rng):
    w = Waveform((rng.standard_normal(100) + 1j * rng.standard_normal(100)).astype(np.complex64),
                 carrier_offset_hz=2500.0)
    write_iq(tmp_path / "a.iq", w)
    back = read_iq(tmp_path / "a.iq")
    assert np.allclose(back.samples, w.samples) and back.carrier_offset_hz == 2500.0
    (tmp_path / "b.iq").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        read_iq(tmp_path / "b.iq")
