"""Baseband impairments: CFO, fractional delay, sampling drift, coupling loss and AWGN."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from nbiot.numerology import DEFAULT_CARRIER_HZ, SAMPLE_RATE_HZ
from nbiot.waveform import Waveform

INTERP_TAPS = 16
THERMAL_NOISE_DBM_HZ = -174.0
_CHUNK = 1 << 16


@dataclass(frozen=True)
class ChannelSpec:
    """Static impairment set.

    ``snr_db`` is the ratio of ``reference_power`` to the noise power.  When
    ``noise_bandwidth_hz`` is None the noise power is per sample over the full
    sample rate; otherwise it is measured inside ``noise_bandwidth_hz`` (the
    in-band SNR of a narrowband signal).  Coupling loss attenuates the signal
    after the noise reference is fixed, so it lowers the effective SNR.
    """
    snr_db: float = math.inf
    cfo_hz: float = 0.0
    delay_samples: float = 0.0
    drift_ppm: float = 0.0
    coupling_loss_db: float = 0.0
    seed: Optional[int] = None
    noise_bandwidth_hz: Optional[float] = None
    reference_power: float = 1.0

    def __post_init__(self):
        if self.coupling_loss_db < 0:
            raise ValueError("coupling loss must be non-negative")
        if self.noise_bandwidth_hz is not None and self.noise_bandwidth_hz <= 0:
            raise ValueError("noise bandwidth must be positive")

    def noise_variance(self, sample_rate: float = SAMPLE_RATE_HZ) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        var = self.reference_power * 10 ** (-self.snr_db / 10)
        if self.noise_bandwidth_hz is not None:
            var *= sample_rate / self.noise_bandwidth_hz
        return var

    def with_seed(self, seed) -> "ChannelSpec":
        return replace(self, seed=seed)

    @classmethod
    def from_link_budget(cls, tx_power_dbm: float, coupling_loss_db: float,
                         noise_figure_db: float, bandwidth_hz: float, **kw) -> "ChannelSpec":
        """Spec whose effective in-band SNR follows the thermal-noise budget."""
        noise_dbm = THERMAL_NOISE_DBM_HZ + 10 * math.log10(bandwidth_hz) + noise_figure_db
        return cls(snr_db=tx_power_dbm - noise_dbm, coupling_loss_db=coupling_loss_db,
                   noise_bandwidth_hz=bandwidth_hz, **kw)


def compose_cfo(ppm: float, carrier_hz: float = DEFAULT_CARRIER_HZ,
                raster_offset_hz: float = 0.0) -> float:
    return ppm * 1e-6 * carrier_hz + raster_offset_hz


def drift_from_cfo(cfo_hz: float, carrier_hz: float, duration_s: float) -> float:
    """Timing slip in seconds accumulated by a clock that is off by cfo/carrier."""
    if carrier_hz <= 0:
        raise ValueError("carrier frequency must be positive")
    return cfo_hz / carrier_hz * duration_s


def _interp_kernel(frac: np.ndarray) -> np.ndarray:
    """Hann-windowed sinc taps for offsets -7..8 around floor(t)."""
    k = np.arange(-INTERP_TAPS // 2 + 1, INTERP_TAPS // 2 + 1)
    x = frac[..., None] - k
    window = 0.5 + 0.5 * np.cos(np.pi * x / (INTERP_TAPS / 2))
    return np.sinc(x) * window


def resample(samples: np.ndarray, delay: float, drift_ppm: float = 0.0) -> np.ndarray:
    """out[n] = in(n - delay - drift*n) along the last axis, zero outside the input."""
    n_out = samples.shape[-1]
    eps = drift_ppm * 1e-6
    if eps == 0 and float(delay).is_integer():
        d = int(delay)
        out = np.zeros_like(samples, dtype=complex)
        if d >= 0:
            out[..., d:] = samples[..., :n_out - d] if d < n_out else 0
        else:
            out[..., :n_out + d] = samples[..., -d:]
        return out
    half = INTERP_TAPS // 2
    padded = np.concatenate([np.zeros(samples.shape[:-1] + (half,), complex), samples,
                             np.zeros(samples.shape[:-1] + (half + 1,), complex)], axis=-1)
    out = np.empty(samples.shape, complex)
    taps_idx = np.arange(-half + 1, half + 1)
    for lo in range(0, n_out, _CHUNK):
        n = np.arange(lo, min(lo + _CHUNK, n_out))
        t = n - delay - eps * n
        base = np.floor(t)
        kern = _interp_kernel(t - base)
        idx = base.astype(np.int64)[:, None] + taps_idx + half
        valid = (idx >= 0) & (idx < padded.shape[-1])
        idx = np.clip(idx, 0, padded.shape[-1] - 1)
        out[..., lo:lo + n.size] = np.sum(padded[..., idx] * (kern * valid), axis=-1)
    return out


def impair(samples: np.ndarray, spec: ChannelSpec, rng=None,
           sample_rate: float = SAMPLE_RATE_HZ, start_sample: int = 0) -> np.ndarray:
    """Apply ``spec`` along the last axis; leading axes are independent realizations."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    x = np.asarray(samples, dtype=complex)
    if spec.cfo_hz:
        n = np.arange(start_sample, start_sample + x.shape[-1])
        x = x * np.exp(2j * np.pi * spec.cfo_hz / sample_rate * n)
    if spec.delay_samples or spec.drift_ppm:
        x = resample(x, spec.delay_samples, spec.drift_ppm)
    if spec.coupling_loss_db:
        x = x * 10 ** (-spec.coupling_loss_db / 20)
    var = spec.noise_variance(sample_rate)
    if var > 0:
        noise = rng.standard_normal(x.shape + (2,)) @ np.array([1.0, 1j])
        x = x + noise * math.sqrt(var / 2)
    elif x is samples:
        x = x.copy()
    return x


def apply(wave: Waveform, spec: ChannelSpec) -> Waveform:
    """Pass ``wave`` through the impairment chain; deterministic for a given seed."""
    out = impair(wave.samples, spec, sample_rate=wave.sample_rate)
    return Waveform(out, wave.sample_rate, wave.carrier_offset_hz)
