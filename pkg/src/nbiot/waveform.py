"""Complex baseband waveforms, OFDM (de)modulation and the IQ file format.

IQ file layout (little-endian)::

    magic        4 bytes  b"NBIQ"
    version      uint32   1
    sample_rate  float64  Hz
    carrier_off  float64  Hz, carrier offset of the stream
    n_samples    uint64
    payload      n_samples x (float32 I, float32 Q)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nbiot.numerology import (SAMPLE_RATE_HZ, SAMPLES_PER_SUBFRAME, SUBCARRIERS,
                              SYMBOLS_PER_SUBFRAME, symbol_starts, cp_lengths)

FFT_SIZE = 128
_MAGIC = b"NBIQ"
_HEADER = struct.Struct("<4sIddQ")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE_HZ
    carrier_offset_hz: float = 0.0

    def __len__(self) -> int:
        return int(self.samples.shape[-1])

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def write_iq(path, wave: Waveform) -> None:
    samples = np.asarray(wave.samples, dtype=np.complex64).ravel()
    inter = np.empty(2 * samples.size, dtype="<f4")
    inter[0::2] = samples.real
    inter[1::2] = samples.imag
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, float(wave.sample_rate),
                              float(wave.carrier_offset_hz), samples.size))
        fh.write(inter.tobytes())


def read_iq(path) -> Waveform:
    data = Path(path).read_bytes()
    magic, version, rate, offset, n = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path} is not an NB-IoT IQ file")
    inter = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=2 * n)
    return Waveform((inter[0::2] + 1j * inter[1::2]).astype(np.complex128), rate, offset)


# subcarrier k of the 12-subcarrier carrier sits on FFT bin k - 6
DL_BINS = (np.arange(SUBCARRIERS) - SUBCARRIERS // 2) % FFT_SIZE
_DL_SCALE = FFT_SIZE / np.sqrt(SUBCARRIERS)


def _starts_and_cps():
    starts = np.array(symbol_starts(FFT_SIZE))
    cps = np.array(cp_lengths(FFT_SIZE) * 2)
    return starts, cps


def ofdm_modulate(values: np.ndarray) -> np.ndarray:
    """Serialize (..., N, 12, 14) subframe grids to (..., N*1920) samples.

    A fully loaded carrier with unit-power elements has unit sample power.
    """
    values = np.asarray(values, dtype=complex)
    lead = values.shape[:-3]
    n_sf = values.shape[-3]
    spec = np.zeros(lead + (n_sf, SYMBOLS_PER_SUBFRAME, FFT_SIZE), complex)
    spec[..., DL_BINS] = np.swapaxes(values, -1, -2)
    td = np.fft.ifft(spec, axis=-1) * _DL_SCALE
    out = np.empty(lead + (n_sf, SAMPLES_PER_SUBFRAME), complex)
    starts, cps = _starts_and_cps()
    for l in range(SYMBOLS_PER_SUBFRAME):
        s, cp = starts[l], cps[l]
        out[..., s:s + cp] = td[..., l, FFT_SIZE - cp:]
        out[..., s + cp:s + cp + FFT_SIZE] = td[..., l, :]
    return out.reshape(lead + (n_sf * SAMPLES_PER_SUBFRAME,))


def ofdm_demodulate(samples: np.ndarray, n_subframes: int | None = None,
                    start: int = 0) -> np.ndarray:
    """Inverse of :func:`ofdm_modulate`, returning (..., N, 12, 14)."""
    samples = np.asarray(samples)
    if n_subframes is None:
        n_subframes = (samples.shape[-1] - start) // SAMPLES_PER_SUBFRAME
    seg = samples[..., start:start + n_subframes * SAMPLES_PER_SUBFRAME]
    seg = seg.reshape(samples.shape[:-1] + (n_subframes, SAMPLES_PER_SUBFRAME))
    starts, cps = _starts_and_cps()
    idx = (starts + cps)[:, None] + np.arange(FFT_SIZE)[None, :]
    blocks = seg[..., idx]  # (..., N, 14, 128)
    spec = np.fft.fft(blocks, axis=-1) / _DL_SCALE
    return np.swapaxes(spec[..., DL_BINS], -1, -2)


def serialize(grids, numerology=None) -> Waveform:
    """OFDM-modulate a contiguous run of subframe grids."""
    grids = list(grids)
    if not grids:
        return Waveform(np.zeros(0, complex))
    subframes = [g.subframe for g in grids]
    if any(b - a != 1 for a, b in zip(subframes, subframes[1:])):
        raise ValueError("grids must be consecutive subframes")
    values = np.stack([g.values for g in grids])
    return Waveform(ofdm_modulate(values))
