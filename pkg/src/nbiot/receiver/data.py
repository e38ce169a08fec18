"""NPDSCH / NPUSCH demodulation and decoding."""
from __future__ import annotations

from typing import Optional

import numpy as np

from nbiot.coding import (Channel, Scheme, TransportBlock, demodulate, repetition_decode,
                          tbcc_decode_batch, turbo_decode_batch)
from nbiot.coding.crc import CRC24A
from nbiot.grid import (CellConfig, ChannelKind, MappingError, channel_elements, data_capacity,
                        nrs_elements, nrs_values)
from nbiot.numerology import SAMPLES_PER_SUBFRAME, SYMBOLS_PER_SUBFRAME
from nbiot.phy_dl import NpdschConfig, npdsch_scrambling, pool_subframes
from nbiot.phy_ul import (NpuschAllocation, data_symbol_mask, dft_decode, dmrs_grid,
                          sc_fdma_demodulate, slot_samples)
from nbiot.sequences import NpuschFormat
from nbiot.waveform import Waveform, ofdm_demodulate

_NRS_SLOT_CENTERS = (5.5, 12.5)


def _smooth(per_slot: np.ndarray, window: int) -> np.ndarray:
    n = per_slot.shape[-1]
    kernel = np.ones(window) / window
    norm = np.convolve(np.ones(n), kernel, mode="same")
    flat = per_slot.reshape(-1, n)
    out = np.array([np.convolve(row, kernel, mode="same") / norm for row in flat])
    return out.reshape(per_slot.shape)


def nrs_channel_estimate(grids: np.ndarray, subframes, cell: CellConfig,
                         window: Optional[int] = None) -> np.ndarray:
    """Least-squares NRS estimate, flat in frequency; returns (..., N, 14).

    Per-slot LS values are averaged over ``window`` slots and linearly
    interpolated across each subframe; ``window=None`` averages the whole
    transmission, which is the best choice for a static channel.
    """
    pos = nrs_elements(cell.nb_pcid, 1)[0]
    k = np.array([p[0] for p in pos])
    l = np.array([p[1] for p in pos])
    refs = np.stack([nrs_values(cell.nb_pcid, sf, 0) for sf in subframes])  # (N, 8)
    ls = grids[..., k, l] * np.conj(refs)
    if window is None:
        h = ls.mean(axis=(-1, -2))
        return np.broadcast_to(h[..., None, None], ls.shape[:-1] + (SYMBOLS_PER_SUBFRAME,))
    slots = np.stack([ls[..., l < 7].mean(axis=-1), ls[..., l >= 7].mean(axis=-1)], axis=-1)
    n = slots.shape[-2]
    slots = _smooth(slots.reshape(slots.shape[:-2] + (2 * n,)), window).reshape(slots.shape)
    first, second = slots[..., 0], slots[..., 1]
    t = np.arange(SYMBOLS_PER_SUBFRAME)
    a, b = _NRS_SLOT_CENTERS
    w = (t - a) / (b - a)
    return first[..., None] * (1 - w) + second[..., None] * w


def npdsch_llrs(grids: np.ndarray, cfg: NpdschConfig, cell: CellConfig, subframes,
                noise_var: float = 1.0, window: Optional[int] = None) -> np.ndarray:
    """Equalized, descrambled and repetition-combined LLRs, shape (..., E)."""
    n_sf = cfg.subframes(cell)
    h = nrs_channel_estimate(grids, subframes, cell, window)
    elements = channel_elements(ChannelKind.NPDSCH, cell)
    k = np.array([e[0] for e in elements])
    l = np.array([e[1] for e in elements])
    y = grids[..., k, l]
    hh = h[..., l]
    gain = np.maximum(np.abs(hh) ** 2, 1e-12)
    llr = demodulate(y * np.conj(hh) / gain, Scheme.QPSK, noise_var / gain)
    lead = llr.shape[:-2]
    llr = llr.reshape(lead + (cfg.repetitions, n_sf * llr.shape[-1])).sum(axis=-2)
    return llr * (1.0 - 2.0 * npdsch_scrambling(cell.nb_pcid, llr.shape[-1]))


def decode_npdsch_grids(grids: np.ndarray, cfg: NpdschConfig, cell: CellConfig,
                        noise_var: float = 1.0, window: Optional[int] = None):
    """Decode demodulated subframes (..., N, 12, 14); returns (bits (..., tbs), crc_ok (...))."""
    subframes = pool_subframes(cfg.start_position.absolute_subframe,
                               cfg.subframes(cell) * cfg.repetitions)
    if grids.shape[-3] != len(subframes):
        raise MappingError(f"expected {len(subframes)} subframes, got {grids.shape[-3]}")
    llr = npdsch_llrs(grids, cfg, cell, subframes, noise_var, window)
    lead = llr.shape[:-1]
    bits, ok = tbcc_decode_batch(llr.reshape(-1, llr.shape[-1]), cfg.tbs + 24, CRC24A)
    return bits[:, :cfg.tbs].reshape(lead + (cfg.tbs,)), ok.reshape(lead)


def decode_npdsch(samples, cfg: NpdschConfig, cell: CellConfig,
                  stream_start_subframe: Optional[int] = None, noise_var: float = 1.0,
                  window: Optional[int] = None):
    """Decode an NPDSCH from a time-aligned stream.

    ``samples[0]`` is the first sample of absolute subframe
    ``stream_start_subframe`` (default: the first scheduled subframe).
    Returns ``(TransportBlock, crc_ok)``.
    """
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    subframes = pool_subframes(cfg.start_position.absolute_subframe,
                               cfg.subframes(cell) * cfg.repetitions)
    first = subframes[0] if stream_start_subframe is None else stream_start_subframe
    if subframes[0] < first or (subframes[-1] - first + 1) * SAMPLES_PER_SUBFRAME > x.shape[-1]:
        raise MappingError("scheduled NPDSCH subframes are not inside the sample stream")
    all_grids = ofdm_demodulate(x, subframes[-1] - first + 1)
    grids = all_grids[..., [s - first for s in subframes], :, :]
    bits, ok = decode_npdsch_grids(grids, cfg, cell, noise_var, window)
    if np.ndim(ok) == 0:
        return TransportBlock(bits, Channel.NPDSCH), bool(ok)
    return [TransportBlock(b, Channel.NPDSCH) for b in bits], ok


# -- uplink -------------------------------------------------------------------

def dmrs_channel_estimate(slots: np.ndarray, alloc: NpuschAllocation, cell,
                          window: Optional[int] = None) -> np.ndarray:
    """LS estimate from DMRS, averaged over ``window`` slots (all slots if None).

    Returns (..., n_slots) complex gains, flat across the allocated tones.
    """
    n_slots = slots.shape[-3]
    ref = dmrs_grid(alloc, cell, n_slots)
    obs = slots[..., ~data_symbol_mask(alloc.format), :]
    per_slot = (obs * np.conj(ref)).mean(axis=(-1, -2))
    if window is None:
        return np.repeat(per_slot.mean(axis=-1, keepdims=True), n_slots, axis=-1)
    return _smooth(per_slot, window)


def npusch_llrs(slots: np.ndarray, alloc: NpuschAllocation, cell, noise_var: float = 1.0,
                window: Optional[int] = None) -> np.ndarray:
    """Per-bit LLRs of the whole transmission, shape (..., R * E)."""
    h = dmrs_channel_estimate(slots, alloc, cell, window)
    data = slots[..., data_symbol_mask(alloc.format), :]
    gain = np.maximum(np.abs(h) ** 2, 1e-12)[..., None, None]
    eq = data * np.conj(h)[..., None, None] / gain
    sym = dft_decode(eq, alloc.tone_count)
    nv = np.broadcast_to(noise_var / gain, sym.shape)
    flat = sym.reshape(sym.shape[:-3] + (-1,))
    scheme = alloc.scheme if alloc.format is NpuschFormat.F1 else Scheme.PI2_BPSK
    return demodulate(flat, scheme, nv.reshape(flat.shape))


def decode_npusch_slots(slots: np.ndarray, alloc: NpuschAllocation, cell, tbs: int = 0,
                        noise_var: float = 1.0, window: Optional[int] = None,
                        iterations: int = 6):
    """Decode demodulated slots (..., S, 7, tones).

    Format 1 returns ``(bits (..., tbs), crc_ok (...))``; format 2 returns
    the decided HARQ-ACK bit(s) and a confidence-free True flag.
    """
    llr = npusch_llrs(slots, alloc, cell, noise_var, window)
    lead = llr.shape[:-1]
    if alloc.format is NpuschFormat.F2:
        ack = (llr.sum(axis=-1) < 0).astype(int)
        return ack, np.ones(lead, bool)
    combined = llr.reshape(lead + (alloc.repetitions, -1)).sum(axis=-2)
    bits, ok = turbo_decode_batch(combined.reshape(-1, combined.shape[-1]), tbs + 24, iterations)
    return bits[:, :tbs].reshape(lead + (tbs,)), ok.reshape(lead)


def decode_npusch(samples, alloc: NpuschAllocation, cell, tbs: int = 0, start: int = 0,
                  noise_var: float = 1.0, window: Optional[int] = None):
    """Decode format 1 (returns (TransportBlock, crc_ok)) or format 2 (returns (ack, True))."""
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    n_slots = alloc.slots(tbs) * alloc.repetitions
    if start < 0 or start + n_slots * slot_samples(alloc) > x.shape[-1]:
        raise MappingError("NPUSCH allocation is not inside the sample stream")
    slots = sc_fdma_demodulate(x, alloc, n_slots, start)
    if alloc.format is NpuschFormat.F2:
        ack, ok = decode_npusch_slots(slots, alloc, cell, noise_var=noise_var, window=window)
        return (int(ack), True) if np.ndim(ack) == 0 else (ack, ok)
    bits, ok = decode_npusch_slots(slots, alloc, cell, tbs, noise_var, window)
    if np.ndim(ok) == 0:
        return TransportBlock(bits, Channel.NPUSCH_F1), bool(ok)
    return [TransportBlock(b, Channel.NPUSCH_F1) for b in bits], ok
