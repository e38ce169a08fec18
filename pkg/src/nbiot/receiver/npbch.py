"""NPBCH acquisition with raster-offset hypothesis testing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from nbiot.coding import MIB_BITS, Channel, TransportBlock, tbcc_decode_batch, tbcc_encode
from nbiot.coding.crc import CRC24A
from nbiot.coding.ratematch import select_bits
from nbiot.grid import CellConfig, ChannelKind, channel_elements, nrs_elements, nrs_values
from nbiot.numerology import (DEFAULT_CARRIER_HZ, SAMPLE_RATE_HZ, SAMPLES_PER_FRAME,
                              raster_hypotheses)
from nbiot.phy_dl import (NPBCH_REPETITIONS, NPBCH_SUBBLOCK_BITS, NPBCH_SUBBLOCKS,
                          NPBCH_TTI_FRAMES, Mib, npbch_scrambling)
from nbiot.receiver.sync import SyncError, SyncResult
from nbiot.waveform import Waveform, ofdm_demodulate

NPBCH_TTI_S = NPBCH_TTI_FRAMES * 10e-3


class AcquisitionError(SyncError):
    def __init__(self, message, attempts: int, latency_s: float):
        super().__init__(message)
        self.attempts = attempts
        self.latency_s = latency_s


@dataclass
class NpbchResult:
    mib: Mib
    raster_hypothesis_hz: float
    subblock: int
    frame_number: int        # SFN of the frame at the sync timing reference
    attempts: int
    latency_s: float         # simulated time from the sync reference to the decoded sub-block's end
    metric: float


def _subframe_symbols(x: np.ndarray, start: int, cfo: float, offset: int):
    """Demodulate subframe 0 starting at ``start`` after CFO removal, or None if outside."""
    if start < 0 or start + 1920 > x.size:
        return None
    n = np.arange(start, start + 1920) + offset
    seg = x[start:start + 1920] * np.exp(-2j * np.pi * cfo * n / SAMPLE_RATE_HZ)
    return ofdm_demodulate(seg, 1)[0]


def _flat_channel(grid: np.ndarray, cell: CellConfig) -> complex:
    pos = nrs_elements(cell.nb_pcid, 1)[0]
    ref = nrs_values(cell.nb_pcid, 0, 0)
    obs = np.array([grid[k, l] for k, l in pos])
    return complex(np.mean(obs * np.conj(ref)))


def npbch_soft_symbols(x: np.ndarray, sync: SyncResult, cell: CellConfig, first_frame: int,
                       hypothesis_hz: float, sample_offset: int = 0,
                       carrier_hz: float = DEFAULT_CARRIER_HZ) -> Optional[np.ndarray]:
    """MRC-combined NPBCH symbols of the 8 repetitions starting at ``first_frame``.

    Frame starts are predicted from the sync timing with the sampling drift
    implied by the CFO estimate minus the raster hypothesis.
    """
    drift = (sync.cfo_hz_estimate - hypothesis_hz) / carrier_hz
    elements = channel_elements(ChannelKind.NPBCH, cell)
    kk = np.array([e[0] for e in elements])
    ll = np.array([e[1] for e in elements])
    acc = np.zeros(len(elements), complex)
    for r in range(NPBCH_REPETITIONS):
        nominal = sync.sample_timing + (first_frame + r) * SAMPLES_PER_FRAME
        start = int(round(nominal * (1 + drift))) - sample_offset
        grid = _subframe_symbols(x, start, sync.cfo_hz_estimate, sample_offset)
        if grid is None:
            return None
        h = _flat_channel(grid, cell)
        acc += grid[kk, ll] * np.conj(h)
    return acc


def _qpsk_llr(symbols: np.ndarray) -> np.ndarray:
    llr = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],))
    llr[..., 0::2] = symbols.real
    llr[..., 1::2] = symbols.imag
    return llr


def npbch_decode_candidates(symbols: dict, nb_pcid: int):
    """Blind-decode every (hypothesis, sub-block) pair; returns a list of candidates."""
    keys, llrs = [], []
    for hyp, sym in symbols.items():
        llr = _qpsk_llr(sym)
        llr = llr / (np.mean(np.abs(llr)) + 1e-30)
        for j in range(NPBCH_SUBBLOCKS):
            sign = 1.0 - 2.0 * npbch_scrambling(nb_pcid, j)
            full = np.zeros(NPBCH_SUBBLOCKS * NPBCH_SUBBLOCK_BITS)
            full[j * NPBCH_SUBBLOCK_BITS:(j + 1) * NPBCH_SUBBLOCK_BITS] = llr * sign
            keys.append((hyp, j))
            llrs.append(full)
    if not llrs:
        return []
    llrs = np.array(llrs)
    bits, ok = tbcc_decode_batch(llrs, MIB_BITS + 24, CRC24A)
    out = []
    for (hyp, j), b, good, llr in zip(keys, bits, ok, llrs):
        if not good:
            continue
        mib = Mib.from_bits(b[:MIB_BITS])
        coded = select_bits(tbcc_encode(TransportBlock(b[:MIB_BITS], Channel.NPBCH)).bits,
                            NPBCH_SUBBLOCKS * NPBCH_SUBBLOCK_BITS)
        part = slice(j * NPBCH_SUBBLOCK_BITS, (j + 1) * NPBCH_SUBBLOCK_BITS)
        # cosine similarity with the re-encoded block: 1 only for undistorted symbols
        soft = llr[part]
        metric = float(np.sum(soft * (1.0 - 2.0 * coded[part]))
                       / np.sqrt(soft.size * np.sum(soft ** 2)))
        out.append((metric, hyp, j, mib))
    return out


def npbch_acquire(samples, sync: SyncResult, raster_hypotheses_hz: Optional[Sequence[float]] = None,
                  sample_offset: int = 0, carrier_hz: float = DEFAULT_CARRIER_HZ,
                  max_attempts: int = 4) -> NpbchResult:
    """Decode the MIB from the first complete 80 ms sub-block of ``samples``.

    ``samples[0]`` is received sample ``sample_offset`` of the timeline in
    which ``sync`` was measured. Every raster hypothesis and sub-block index
    is tried; among CRC-passing candidates the best re-encoding metric wins.
    A failed attempt is retried one TTI (640 ms) later.
    """
    if not sync.detected or sync.nb_pcid is None or sync.frame_position_80ms is None:
        raise SyncError("NPBCH acquisition needs a completed cell search")
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    hyps = list(raster_hypotheses() if raster_hypotheses_hz is None else raster_hypotheses_hz)
    cell = CellConfig(nb_pcid=sync.nb_pcid)
    first = -((sync.sample_timing - sample_offset) // SAMPLES_PER_FRAME) - 1
    while (sync.frame_position_80ms + first) % NPBCH_REPETITIONS:
        first += 1
    attempts = 0
    while attempts < max_attempts:
        symbols = {}
        for h in hyps:
            sym = npbch_soft_symbols(x, sync, cell, first, h, sample_offset, carrier_hz)
            if sym is not None:
                symbols[h] = sym
        if not symbols:
            # sub-block not (fully) inside the samples yet: slide by 80 ms until it is
            if (sync.sample_timing + (first + NPBCH_REPETITIONS) * SAMPLES_PER_FRAME
                    - sample_offset) > x.size:
                break
            first += NPBCH_REPETITIONS
            continue
        attempts += 1
        latency = (first + NPBCH_REPETITIONS) * SAMPLES_PER_FRAME / SAMPLE_RATE_HZ
        cands = npbch_decode_candidates(symbols, sync.nb_pcid)
        if cands:
            metric, hyp, j, mib = max(cands, key=lambda c: c[0])
            sfn_first = (mib.sfn_msbs << 6) | (j << 3)
            return NpbchResult(mib, float(hyp), j, (sfn_first - first) % 1024, attempts,
                               latency, metric)
        first += NPBCH_TTI_FRAMES
    latency = (first + NPBCH_REPETITIONS) * SAMPLES_PER_FRAME / SAMPLE_RATE_HZ
    raise AcquisitionError(f"NPBCH not decoded after {attempts} attempt(s)", attempts, latency)
