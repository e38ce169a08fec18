"""Baseline NPRACH detector with hop-phase timing-advance estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nbiot.numerology import SAMPLE_RATE_HZ
from nbiot.phy_ul import (NPRACH_FFT, NPRACH_GROUPS, NPRACH_SPACING_HZ,
                          NPRACH_SYMBOLS_PER_GROUP, NPRACH_TONES, NprachConfig,
                          nprach_hopping, nprach_tone_frequency)
from nbiot.waveform import Waveform

DEFAULT_THRESHOLD_SIGMA = 6.0


@dataclass(frozen=True)
class NprachDetection:
    start_subcarrier: int
    timing_advance_s: float
    metric: float


def nprach_group_values(x: np.ndarray, config: NprachConfig) -> np.ndarray:
    """Per-group tone observations (groups, 48), CP phase removed, 5 symbols summed."""
    n_groups = config.repetitions * NPRACH_GROUPS
    need = n_groups * config.group_samples
    if x.shape[-1] < need:
        x = np.concatenate([x, np.zeros(x.shape[:-1] + (need - x.shape[-1],), complex)], axis=-1)
    groups = x[..., :need].reshape(x.shape[:-1] + (n_groups, config.group_samples))
    body = groups[..., config.cp_samples:].reshape(
        groups.shape[:-1] + (NPRACH_SYMBOLS_PER_GROUP, NPRACH_FFT)).sum(axis=-2)
    spec = np.fft.fft(body, axis=-1) / (NPRACH_FFT * NPRACH_SYMBOLS_PER_GROUP)
    tones = np.arange(NPRACH_TONES)
    freqs = np.array([nprach_tone_frequency(t) for t in tones])
    bins = (tones - NPRACH_TONES // 2) % NPRACH_FFT
    return spec[..., bins] * np.exp(-2j * np.pi * freqs * config.cp_samples / SAMPLE_RATE_HZ)


def _pair_phase(v: np.ndarray, tones: np.ndarray, first: int, step: float) -> complex:
    """Sum of hop-pair products oriented so each phase is -2*pi*step*D/fs."""
    a = v[first::NPRACH_GROUPS]
    b = v[first + 1::NPRACH_GROUPS]
    ta = tones[first::NPRACH_GROUPS]
    tb = tones[first + 1::NPRACH_GROUPS]
    prod = np.where(tb > ta, b * np.conj(a), a * np.conj(b))
    return complex(prod.sum())


def estimate_delay(v: np.ndarray, tones: np.ndarray) -> float:
    """Round-trip delay in samples from the +-1 (coarse) and +-6 (fine) tone hops."""
    coarse = _pair_phase(v, tones, 0, 1) + _pair_phase(v, tones, 2, 1)
    fine = _pair_phase(v, tones, 1, 6)
    d1 = -np.angle(coarse) * SAMPLE_RATE_HZ / (2 * np.pi * NPRACH_SPACING_HZ)
    d6 = -np.angle(fine) * SAMPLE_RATE_HZ / (2 * np.pi * 6 * NPRACH_SPACING_HZ)
    period = SAMPLE_RATE_HZ / (6 * NPRACH_SPACING_HZ)
    return float(d6 + period * np.round((d1 - d6) / period))


def detection_threshold(config: NprachConfig, sigma: float = DEFAULT_THRESHOLD_SIGMA) -> float:
    return 1.0 + sigma / np.sqrt(config.repetitions * NPRACH_GROUPS)


def nprach_detect(samples, config: NprachConfig, seed: int = 0,
                  threshold_sigma: float = DEFAULT_THRESHOLD_SIGMA) -> list[NprachDetection]:
    """Detect every preamble in a stream aligned to the NPRACH resource start.

    The metric is the mean hopped-tone energy over the median-based noise
    level; candidates above ``1 + sigma / sqrt(groups)`` are reported with
    their timing advance, strongest first.
    """
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    obs = nprach_group_values(x, config)
    power = np.abs(obs) ** 2
    # a relative floor keeps noiseless streams from flagging leakage
    noise = max(np.median(power) / np.log(2), 1e-3 * power.max(initial=0.0), 1e-30)
    rows = np.arange(obs.shape[0])
    thr = detection_threshold(config, threshold_sigma)
    out = []
    for start in config.subcarriers:
        tones = nprach_hopping(config, start, seed)
        v = obs[rows, tones]
        metric = float(np.mean(np.abs(v) ** 2) / noise)
        if metric >= thr:
            out.append(NprachDetection(start, estimate_delay(v, tones) / SAMPLE_RATE_HZ, metric))
    return sorted(out, key=lambda d: -d.metric)
