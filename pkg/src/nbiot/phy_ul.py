"""Uplink transmit chains: NPUSCH format 1/2 over SC-FDMA and NPRACH preambles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from nbiot.coding import (Channel, Scheme, TransportBlock, modulate, rate_match,
                          repetition_encode, turbo_encode)
from nbiot.grid import CellConfig
from nbiot.numerology import (NUMEROLOGY_15KHZ, NUMEROLOGY_3P75KHZ, SAMPLE_RATE_HZ,
                              SYMBOLS_PER_SLOT, Numerology, cp_lengths)
from nbiot.sequences import DMRS_SYMBOLS, NpuschFormat, generate_dmrs
from nbiot.waveform import Waveform

UL_REPETITIONS = tuple(2 ** i for i in range(8))
RU_CHOICES = (1, 2, 3, 4, 5, 6, 8, 10)
NPUSCH_MAX_CODE_RATE = 0.93
# slots per resource unit, keyed by (format, subcarrier spacing, tone count)
_RU_SLOTS = {
    (NpuschFormat.F1, 15e3, 12): 2, (NpuschFormat.F1, 15e3, 6): 4,
    (NpuschFormat.F1, 15e3, 3): 8, (NpuschFormat.F1, 15e3, 1): 16,
    (NpuschFormat.F1, 3.75e3, 1): 16,
    (NpuschFormat.F2, 15e3, 1): 4, (NpuschFormat.F2, 3.75e3, 1): 4,
}
# 3.75 kHz slot: 7 x (16 CP + 512) samples and a 144-sample guard period
SLOT_3P75_CP = 16
SLOT_3P75_GUARD = 144


@dataclass(frozen=True)
class NpuschAllocation:
    numerology: Numerology = NUMEROLOGY_15KHZ
    tone_count: int = 1
    tone_offset: int = 0
    format: NpuschFormat = NpuschFormat.F1
    repetitions: int = 1
    num_ru: Optional[int] = None
    modulation: Optional[Scheme] = None

    def __post_init__(self):
        spacing = self.numerology.subcarrier_spacing_hz
        fmt = NpuschFormat(self.format)
        object.__setattr__(self, "format", fmt)
        if spacing not in (15e3, 3.75e3):
            raise ValueError(f"unsupported subcarrier spacing {spacing}")
        if spacing == 3.75e3 and self.tone_count != 1:
            raise ValueError("3.75 kHz numerology supports single-tone transmission only")
        if self.tone_count not in (1, 3, 6, 12):
            raise ValueError(f"tone count {self.tone_count} not in 1/3/6/12")
        if fmt is NpuschFormat.F2 and self.tone_count != 1:
            raise ValueError("NPUSCH format 2 uses single-tone transmission only")
        if not 0 <= self.tone_offset or self.tone_offset + self.tone_count > self.numerology.tone_count:
            raise ValueError("allocation exceeds the carrier")
        if self.repetitions not in UL_REPETITIONS:
            raise ValueError(f"repetitions {self.repetitions} not a power of 2 up to 128")
        if self.num_ru is not None and self.num_ru not in RU_CHOICES:
            raise ValueError(f"unsupported resource-unit count {self.num_ru}")
        if self.modulation is not None:
            scheme = Scheme(self.modulation)
            if self.tone_count > 1 and scheme is not Scheme.QPSK:
                raise ValueError("multi-tone transmission uses QPSK")
            if self.tone_count == 1 and scheme is Scheme.QPSK:
                raise ValueError("single-tone transmission uses pi/2-BPSK or pi/4-QPSK")
            if fmt is NpuschFormat.F2 and scheme is not Scheme.PI2_BPSK:
                raise ValueError("format 2 uses pi/2-BPSK")
            object.__setattr__(self, "modulation", scheme)

    @property
    def scheme(self) -> Scheme:
        if self.modulation is not None:
            return self.modulation
        return Scheme.QPSK if self.tone_count > 1 else Scheme.PI2_BPSK

    @property
    def spacing_hz(self) -> float:
        return self.numerology.subcarrier_spacing_hz

    @property
    def slots_per_ru(self) -> int:
        return _RU_SLOTS[(self.format, self.spacing_hz, self.tone_count)]

    @property
    def ru_duration_s(self) -> float:
        return self.slots_per_ru * self.numerology.slot_duration_s

    @property
    def data_symbols_per_slot(self) -> int:
        return SYMBOLS_PER_SLOT - len(DMRS_SYMBOLS[self.format])

    def bits_per_ru(self) -> int:
        return (self.slots_per_ru * self.data_symbols_per_slot * self.tone_count
                * self.scheme.bits_per_symbol)

    def resource_units(self, tbs: int) -> int:
        if self.format is NpuschFormat.F2:
            return 1
        if self.num_ru is not None:
            return self.num_ru
        for n in RU_CHOICES:
            if (tbs + 24) / (n * self.bits_per_ru()) <= NPUSCH_MAX_CODE_RATE:
                return n
        raise ValueError(f"TBS {tbs} does not fit {RU_CHOICES[-1]} resource units")

    def slots(self, tbs: int = 0) -> int:
        """Slots of one copy of the transport block (before repetition)."""
        return self.resource_units(tbs) * self.slots_per_ru

    def duration_s(self, tbs: int = 0) -> float:
        return self.slots(tbs) * self.repetitions * self.numerology.slot_duration_s


# -- SC-FDMA ----------------------------------------------------------------

def tone_bins(spacing_hz: float) -> np.ndarray:
    """FFT bin of every tone of the 180 kHz carrier for the given spacing."""
    n = int(round(180e3 / spacing_hz))
    fft = int(round(SAMPLE_RATE_HZ / spacing_hz))
    return (np.arange(n) - n // 2) % fft


def _slot_layout(spacing_hz: float):
    """(useful-part starts, cp lengths, fft size, slot length) for one slot."""
    if spacing_hz == 15e3:
        cps = np.array(cp_lengths()[:SYMBOLS_PER_SLOT])
        fft = 128
    else:
        cps = np.full(SYMBOLS_PER_SLOT, SLOT_3P75_CP)
        fft = 512
    starts = np.cumsum(np.r_[0, (cps + fft)[:-1]]) + cps
    length = int(np.sum(cps + fft)) + (SLOT_3P75_GUARD if spacing_hz == 3.75e3 else 0)
    return starts, cps, fft, length


def sc_fdma_modulate(values: np.ndarray, alloc: NpuschAllocation) -> np.ndarray:
    """Frequency-domain slots (..., S, 7, tones) to samples.

    Data symbols are expected already DFT-precoded; every SC-FDMA symbol is
    scaled so that a fully used allocation has unit average power.
    """
    starts, cps, fft, length = _slot_layout(alloc.spacing_hz)
    bins = tone_bins(alloc.spacing_hz)[alloc.tone_offset:alloc.tone_offset + alloc.tone_count]
    shape = values.shape[:-2]
    spec = np.zeros(shape + (SYMBOLS_PER_SLOT, fft), complex)
    spec[..., bins] = values
    body = np.fft.ifft(spec, axis=-1) * fft / math.sqrt(alloc.tone_count)
    out = np.zeros(shape + (length,), complex)
    for l in range(SYMBOLS_PER_SLOT):
        s, cp = starts[l], cps[l]
        out[..., s - cp:s] = body[..., l, fft - cp:]
        out[..., s:s + fft] = body[..., l, :]
    return out.reshape(shape[:-1] + (-1,))


def sc_fdma_demodulate(samples: np.ndarray, alloc: NpuschAllocation, n_slots: int,
                       start: int = 0) -> np.ndarray:
    """Inverse of :func:`sc_fdma_modulate`: samples to (..., n_slots, 7, tones)."""
    starts, cps, fft, length = _slot_layout(alloc.spacing_hz)
    x = np.asarray(samples)[..., start:start + n_slots * length]
    x = x.reshape(x.shape[:-1] + (n_slots, length))
    idx = starts[:, None] + np.arange(fft)
    spec = np.fft.fft(x[..., idx], axis=-1) * math.sqrt(alloc.tone_count) / fft
    bins = tone_bins(alloc.spacing_hz)[alloc.tone_offset:alloc.tone_offset + alloc.tone_count]
    return spec[..., bins]


def slot_samples(alloc: NpuschAllocation) -> int:
    return _slot_layout(alloc.spacing_hz)[3]


def dft_precode(symbols: np.ndarray, tones: int) -> np.ndarray:
    if tones == 1:
        return symbols
    return np.fft.fft(symbols, axis=-1) / math.sqrt(tones)


def dft_decode(values: np.ndarray, tones: int) -> np.ndarray:
    if tones == 1:
        return values
    return np.fft.ifft(values, axis=-1) * math.sqrt(tones)


def data_symbol_mask(fmt: NpuschFormat) -> np.ndarray:
    mask = np.ones(SYMBOLS_PER_SLOT, bool)
    mask[list(DMRS_SYMBOLS[NpuschFormat(fmt)])] = False
    return mask


def dmrs_grid(alloc: NpuschAllocation, cell, n_slots: int) -> np.ndarray:
    """DMRS values (n_slots, n_dmrs_symbols, tones) for consecutive slots."""
    return np.stack([generate_dmrs(alloc.format, s, cell, alloc.tone_count)[1]
                     for s in range(n_slots)])


def assemble_slots(data_symbols: np.ndarray, alloc: NpuschAllocation, cell) -> np.ndarray:
    """Place modulated data (..., n_slots*data_syms*tones) and DMRS into slot grids."""
    per_slot = alloc.data_symbols_per_slot * alloc.tone_count
    n_slots = data_symbols.shape[-1] // per_slot
    lead = data_symbols.shape[:-1]
    data = data_symbols.reshape(lead + (n_slots, alloc.data_symbols_per_slot, alloc.tone_count))
    data = dft_precode(data, alloc.tone_count)
    grid = np.zeros(lead + (n_slots, SYMBOLS_PER_SLOT, alloc.tone_count), complex)
    grid[..., data_symbol_mask(alloc.format), :] = data
    grid[..., ~data_symbol_mask(alloc.format), :] = dmrs_grid(alloc, cell, n_slots)
    return grid


def npusch_f1_bits(tb: TransportBlock, alloc: NpuschAllocation) -> np.ndarray:
    """Rate-matched coded bits of one copy of the block."""
    e = alloc.resource_units(tb.tbs) * alloc.bits_per_ru()
    return rate_match(turbo_encode(tb), e)


def npusch_f1_grid(tb: TransportBlock, alloc: NpuschAllocation, cell) -> np.ndarray:
    """Frequency-domain slots (R*S, 7, tones) of a format-1 transmission."""
    if tb.channel is not Channel.NPUSCH_F1:
        raise ValueError("format 1 carries NPUSCH_F1 transport blocks")
    if tb.tbs > 1000:
        raise ValueError(f"NPUSCH TBS {tb.tbs} exceeds 1000")
    if alloc.format is not NpuschFormat.F1:
        raise ValueError("allocation is not format 1")
    bits = np.tile(npusch_f1_bits(tb, alloc), alloc.repetitions)
    return assemble_slots(modulate(bits, alloc.scheme), alloc, cell)


def build_npusch_f1(tb: TransportBlock, alloc: NpuschAllocation, cell) -> Waveform:
    """Turbo-coded data over SC-FDMA, repeated ``alloc.repetitions`` times back-to-back.

    The single-tone rotation index runs over the whole transmission so the
    phase stays continuous across slots and repetitions.
    """
    return Waveform(sc_fdma_modulate(npusch_f1_grid(tb, alloc, cell), alloc))


def npusch_f2_grid(ack: int, alloc: NpuschAllocation, cell) -> np.ndarray:
    if alloc.format is not NpuschFormat.F2:
        raise ValueError("allocation is not format 2")
    n = alloc.bits_per_ru() * alloc.repetitions
    bits = repetition_encode(int(ack), n).bits
    return assemble_slots(modulate(bits, Scheme.PI2_BPSK), alloc, cell)


def build_npusch_f2(ack: int, alloc: NpuschAllocation, cell) -> Waveform:
    """Repetition-coded HARQ-ACK bit, DMRS on the middle three symbols of each slot."""
    return Waveform(sc_fdma_modulate(npusch_f2_grid(ack, alloc, cell), alloc))


# -- NPRACH -----------------------------------------------------------------

NPRACH_TONES = 48
NPRACH_SPACING_HZ = 3750.0
NPRACH_FFT = 512
NPRACH_SYMBOLS_PER_GROUP = 5
NPRACH_GROUPS = 4
NPRACH_CP_SAMPLES = {0: 128, 1: 512}


@dataclass(frozen=True)
class NprachConfig:
    format: int = 0
    repetitions: int = 1
    periodicity_ms: int = 80
    start_time_ms: int = 8
    subcarrier_offset: int = 0
    num_subcarriers: int = 12
    multitone_partition_boundary: Optional[int] = None
    cp_length_s: Optional[float] = None

    def __post_init__(self):
        if self.format not in NPRACH_CP_SAMPLES:
            raise ValueError(f"NPRACH format {self.format} not supported")
        expected = NPRACH_CP_SAMPLES[self.format] / SAMPLE_RATE_HZ
        if self.cp_length_s is None:
            object.__setattr__(self, "cp_length_s", expected)
        elif abs(self.cp_length_s - expected) > 0.5e-6:
            raise ValueError(f"format {self.format} uses a {expected * 1e6:.2f} us CP")
        if self.repetitions not in UL_REPETITIONS:
            raise ValueError(f"repetitions {self.repetitions} not a power of 2 up to 128")
        if self.num_subcarriers not in (12, 24, 36, 48):
            raise ValueError("NPRACH spans 12, 24, 36 or 48 subcarriers")
        if not 0 <= self.subcarrier_offset or self.subcarrier_offset + self.num_subcarriers > NPRACH_TONES:
            raise ValueError("NPRACH subcarriers exceed the 48 tones of the carrier")
        b = self.multitone_partition_boundary
        if b is not None and (b % 12 or not 0 <= b <= self.num_subcarriers):
            raise ValueError("partition boundary must be a multiple of 12 inside the range")
        if self.periodicity_ms * 1e-3 < self.total_duration_s:
            raise ValueError("NPRACH periodicity shorter than the preamble")

    @property
    def cp_samples(self) -> int:
        return NPRACH_CP_SAMPLES[self.format]

    @property
    def group_samples(self) -> int:
        return self.cp_samples + NPRACH_SYMBOLS_PER_GROUP * NPRACH_FFT

    @property
    def basic_duration_s(self) -> float:
        return NPRACH_GROUPS * self.group_samples / SAMPLE_RATE_HZ

    @property
    def total_duration_s(self) -> float:
        return self.repetitions * self.basic_duration_s

    @property
    def subcarriers(self) -> range:
        return range(self.subcarrier_offset, self.subcarrier_offset + self.num_subcarriers)

    def capability_sets(self) -> tuple[range, range]:
        """(single-tone set, multi-tone set) of start subcarriers."""
        b = self.num_subcarriers if self.multitone_partition_boundary is None \
            else self.multitone_partition_boundary
        lo = self.subcarrier_offset
        return range(lo, lo + b), range(lo + b, lo + self.num_subcarriers)

    def signals_multitone(self, start_subcarrier: int) -> bool:
        return start_subcarrier in self.capability_sets()[1]


@dataclass(frozen=True)
class NprachPreamble:
    tone_indexes: tuple
    repetitions: int
    start_subcarrier: int
    symbol_groups: int = NPRACH_GROUPS


def _hop(local: int, step: int) -> int:
    """Pair tones inside a 12-tone block: +-1 swaps neighbours, +-6 swaps halves."""
    if step == 1:
        return local + 1 if local % 2 == 0 else local - 1
    return local + 6 if local < 6 else local - 6


@lru_cache(maxsize=256)
def _unit_offsets(seed: int, units: int) -> tuple:
    rng = np.random.default_rng(seed)
    return (0,) + tuple(int(v) for v in rng.integers(0, 12, units - 1))


def nprach_hopping(config: NprachConfig, start_subcarrier: int, seed: int = 0) -> np.ndarray:
    """Absolute tone index of every symbol group, shape (repetitions * 4,).

    Inside a basic unit the tone hops by +-1, +-6 and +-1 within its 12-tone
    block; each later unit adds a cell-seeded cyclic offset to the start.
    """
    if start_subcarrier not in config.subcarriers:
        raise ValueError(f"start subcarrier {start_subcarrier} outside the NPRACH range")
    rel = start_subcarrier - config.subcarrier_offset
    block = config.subcarrier_offset + 12 * (rel // 12)
    tones = []
    for off in _unit_offsets(int(seed), config.repetitions):
        local = (rel % 12 + off) % 12
        g1 = _hop(local, 1)
        g2 = _hop(g1, 6)
        g3 = _hop(g2, 1)
        tones.extend(block + t for t in (local, g1, g2, g3))
    return np.array(tones, dtype=int)


def nprach_tone_frequency(tone: int) -> float:
    return (tone - NPRACH_TONES // 2) * NPRACH_SPACING_HZ


def build_nprach(config: NprachConfig, start_subcarrier: int, seed: int = 0):
    """Single-tone frequency-hopping preamble; returns (NprachPreamble, Waveform).

    Each symbol group is one continuous-phase tone (CP plus five symbols of
    value 1); repetitions follow back-to-back.
    """
    tones = nprach_hopping(config, start_subcarrier, seed)
    n = np.arange(config.group_samples)
    freqs = np.array([nprach_tone_frequency(t) for t in tones])
    groups = np.exp(2j * np.pi * freqs[:, None] * n[None, :] / SAMPLE_RATE_HZ)
    pre = NprachPreamble(tuple(int(t) for t in tones), config.repetitions, start_subcarrier)
    return pre, Waveform(groups.ravel())
