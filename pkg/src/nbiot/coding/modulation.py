"""QPSK, pi/2-BPSK and pi/4-QPSK mapping with max-log LLR demapping."""
from __future__ import annotations

import enum

import numpy as np

_SQRT2 = np.sqrt(2.0)


class Scheme(enum.Enum):
    QPSK = "qpsk"
    PI2_BPSK = "pi2bpsk"
    PI4_QPSK = "pi4qpsk"

    @property
    def bits_per_symbol(self) -> int:
        return 1 if self is Scheme.PI2_BPSK else 2


def _rotation(scheme: Scheme, n: int, start_index: int) -> np.ndarray:
    k = start_index + np.arange(n)
    if scheme is Scheme.PI2_BPSK:
        return np.exp(1j * np.pi / 2 * (k % 2))
    if scheme is Scheme.PI4_QPSK:
        return np.exp(1j * np.pi / 4 * (k % 2))
    return np.ones(n)


def modulate(bits, scheme: Scheme, start_index: int = 0) -> np.ndarray:
    """Map bits onto unit-modulus symbols.

    ``start_index`` continues the alternating rotation of the single-tone
    schemes across calls, keeping phase continuity between transmissions.
    """
    scheme = Scheme(scheme)
    bits = np.asarray(bits, dtype=float)
    if scheme is Scheme.PI2_BPSK:
        base = (1 - 2 * bits).astype(complex)
    else:
        if bits.shape[-1] % 2:
            raise ValueError(f"{scheme.value} needs an even number of bits")
        b = bits.reshape(*bits.shape[:-1], -1, 2)
        base = ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) / _SQRT2
    return base * _rotation(scheme, base.shape[-1], start_index)


def demodulate(symbols, scheme: Scheme, noise_var: float, start_index: int = 0) -> np.ndarray:
    """Per-bit LLRs (positive favours 0) for symbols observed in complex noise of variance ``noise_var``."""
    scheme = Scheme(scheme)
    y = np.asarray(symbols, dtype=complex)
    y = y * np.conj(_rotation(scheme, y.shape[-1], start_index))
    noise_var = np.maximum(noise_var, 1e-12)
    if scheme is Scheme.PI2_BPSK:
        return 4.0 * y.real / noise_var
    scale = 2.0 * _SQRT2 / noise_var
    llr = np.stack([scale * y.real, scale * y.imag], axis=-1)
    return llr.reshape(*y.shape[:-1], -1)


def papr_db(waveform: np.ndarray) -> float:
    p = np.abs(np.asarray(waveform)) ** 2
    p = p[p > 0]
    return float(10 * np.log10(p.max() / p.mean()))
