"""Downlink transmit chains: NPBCH, NPDCCH, NPDSCH, NPSS/NSSS and full frame streams."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from nbiot.coding import (DCI_BITS, DL_TBS, MIB_BITS, Channel, Scheme, TransportBlock,
                          modulate, rate_match, tbcc_encode)
from nbiot.grid import (CellConfig, ChannelKind, ResourceGrid, SubframeRole, Usage,
                        channel_elements, data_capacity, insert_nrs, map_channel,
                        new_subframe, subframe_role)
from nbiot.numerology import (FRAME_NUMBER_MODULUS, SUBFRAMES_PER_FRAME, DeploymentMode,
                              TimingPosition)
from nbiot.sequences import generate_npss, generate_nsss, gold_sequence
from nbiot.waveform import Waveform, ofdm_modulate, serialize  # noqa: F401  (re-export)

NPBCH_SUBBLOCKS = 8
NPBCH_REPETITIONS = 8
NPBCH_TTI_FRAMES = NPBCH_SUBBLOCKS * NPBCH_REPETITIONS
NPBCH_SUBBLOCK_BITS = 200
NPDSCH_REPETITIONS = tuple(2 ** i for i in range(10))
NPDSCH_SUBFRAME_CHOICES = (1, 2, 3, 4, 5, 6, 8, 10)
NPDSCH_MAX_CODE_RATE = 0.75
DL_TIME_OFFSETS = (4, 8, 16, 32, 64)
UL_TIME_OFFSETS = (8, 16, 32, 64)
UL_REPETITIONS = tuple(2 ** i for i in range(8))
ACK_DELAYS = (12, 14, 16, 18)

_MODE_CODES = {DeploymentMode.STANDALONE: 0, DeploymentMode.INBAND: 1, DeploymentMode.GUARDBAND: 2}


def _int_to_bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


@dataclass(frozen=True)
class Mib:
    sfn_msbs: int = 0
    deployment_mode_indicator: int = 0
    system_info_scheduling_stub: int = 0

    def __post_init__(self):
        if not 0 <= self.sfn_msbs < 16:
            raise ValueError("SFN MSBs are 4 bits")
        if not 0 <= self.deployment_mode_indicator < 3:
            raise ValueError("deployment mode indicator must be 0..2")
        if not 0 <= self.system_info_scheduling_stub < 2 ** 28:
            raise ValueError("scheduling stub is 28 bits")

    @property
    def payload_bits(self) -> np.ndarray:
        bits = (_int_to_bits(self.sfn_msbs, 4) + _int_to_bits(self.deployment_mode_indicator, 2)
                + _int_to_bits(self.system_info_scheduling_stub, 28))
        return np.array(bits, dtype=np.uint8)

    @classmethod
    def from_bits(cls, bits) -> "Mib":
        bits = list(np.asarray(bits).ravel())
        if len(bits) != MIB_BITS:
            raise ValueError(f"MIB is {MIB_BITS} bits")
        return cls(_bits_to_int(bits[:4]), _bits_to_int(bits[4:6]), _bits_to_int(bits[6:]))

    @classmethod
    def for_cell(cls, cell: CellConfig, frame_number: int = 0, stub: int = 0) -> "Mib":
        return cls(frame_number >> 6, _MODE_CODES[cell.deployment.mode], stub)


# -- DCI ------------------------------------------------------------------

def subcarrier_allocation_index(tone_offset: int, tone_count: int) -> int:
    """Pack an uplink tone allocation into the 6-bit DCI field."""
    if tone_count == 1 and 0 <= tone_offset < 12:
        return tone_offset
    if tone_count == 3 and tone_offset % 3 == 0 and 0 <= tone_offset < 12:
        return 12 + tone_offset // 3
    if tone_count == 6 and tone_offset in (0, 6):
        return 16 + tone_offset // 6
    if tone_count == 12 and tone_offset == 0:
        return 18
    raise ValueError(f"no DCI encoding for {tone_count} tones at offset {tone_offset}")


def subcarrier_allocation(index: int) -> tuple[int, int]:
    """(tone_offset, tone_count) for a 6-bit allocation index."""
    if 0 <= index < 12:
        return index, 1
    if 12 <= index < 16:
        return 3 * (index - 12), 3
    if index in (16, 17):
        return 6 * (index - 16), 6
    if index == 18:
        return 0, 12
    raise ValueError(f"reserved subcarrier allocation index {index}")


@dataclass(frozen=True)
class Dci:
    """23-bit scheduling message.

    Layout (MSB first): direction(1) tbs_index(4) repetition_index(4)
    time_offset_index(3) subcarrier_allocation(6) harq_ack_resource(4) ndi(1).
    """
    uplink: bool = False
    tbs: int = 680
    repetitions: int = 1
    time_offset_subframes: int = 4
    subcarrier_allocation: int = 0
    harq_ack_resource: int = 0
    new_data_indicator: int = 0

    def __post_init__(self):
        ladder = (DL_TBS + (1000,)) if self.uplink else DL_TBS
        if self.tbs not in ladder:
            raise ValueError(f"TBS {self.tbs} not in the supported ladder")
        reps = UL_REPETITIONS if self.uplink else NPDSCH_REPETITIONS
        if self.repetitions not in reps:
            raise ValueError(f"unsupported repetition count {self.repetitions}")
        offsets = UL_TIME_OFFSETS if self.uplink else DL_TIME_OFFSETS
        if self.time_offset_subframes not in offsets:
            raise ValueError(f"time offset {self.time_offset_subframes} not encodable")
        if self.uplink:
            subcarrier_allocation(self.subcarrier_allocation)
        if not 0 <= self.harq_ack_resource < 16:
            raise ValueError("HARQ-ACK resource is 4 bits")

    @property
    def ack_delay_subframes(self) -> int:
        return ACK_DELAYS[self.harq_ack_resource >> 2]

    def to_bits(self) -> np.ndarray:
        ladder = (DL_TBS + (1000,)) if self.uplink else DL_TBS
        reps = UL_REPETITIONS if self.uplink else NPDSCH_REPETITIONS
        offsets = UL_TIME_OFFSETS if self.uplink else DL_TIME_OFFSETS
        bits = ([int(self.uplink)] + _int_to_bits(ladder.index(self.tbs), 4)
                + _int_to_bits(reps.index(self.repetitions), 4)
                + _int_to_bits(offsets.index(self.time_offset_subframes), 3)
                + _int_to_bits(self.subcarrier_allocation if self.uplink else 0, 6)
                + _int_to_bits(0 if self.uplink else self.harq_ack_resource, 4)
                + [self.new_data_indicator & 1])
        assert len(bits) == DCI_BITS
        return np.array(bits, dtype=np.uint8)

    @classmethod
    def from_bits(cls, bits) -> "Dci":
        bits = [int(b) for b in np.asarray(bits).ravel()]
        if len(bits) != DCI_BITS:
            raise ValueError(f"DCI is {DCI_BITS} bits")
        uplink = bool(bits[0])
        ladder = (DL_TBS + (1000,)) if uplink else DL_TBS
        reps = UL_REPETITIONS if uplink else NPDSCH_REPETITIONS
        offsets = UL_TIME_OFFSETS if uplink else DL_TIME_OFFSETS
        return cls(uplink=uplink, tbs=ladder[_bits_to_int(bits[1:5])],
                   repetitions=reps[_bits_to_int(bits[5:9])],
                   time_offset_subframes=offsets[_bits_to_int(bits[9:12])],
                   subcarrier_allocation=_bits_to_int(bits[12:18]),
                   harq_ack_resource=_bits_to_int(bits[18:22]),
                   new_data_indicator=bits[22])


# -- scrambling ---------------------------------------------------------------

@lru_cache(maxsize=1024)
def scrambling_sequence(c_init: int, length: int) -> np.ndarray:
    seq = gold_sequence(c_init, length)
    seq.setflags(write=False)
    return seq


def npbch_scrambling(nb_pcid: int, subblock: int) -> np.ndarray:
    return scrambling_sequence((nb_pcid << 5) | (subblock << 1) | 1, NPBCH_SUBBLOCK_BITS)


def npdcch_scrambling(nb_pcid: int, length: int) -> np.ndarray:
    return scrambling_sequence((nb_pcid << 5) | 0b10000, length)


def npdsch_scrambling(nb_pcid: int, length: int) -> np.ndarray:
    return scrambling_sequence((nb_pcid << 5) | 0b01000, length)


# -- NPBCH --------------------------------------------------------------------

def npbch_coded_bits(mib: Mib) -> np.ndarray:
    """The 1600 rate-matched bits of one TTI, before per-sub-block scrambling."""
    coded = tbcc_encode(TransportBlock(mib.payload_bits, Channel.NPBCH))
    return rate_match(coded, NPBCH_SUBBLOCKS * NPBCH_SUBBLOCK_BITS)


def npbch_subblock_symbols(mib: Mib, nb_pcid: int, subblock: int) -> np.ndarray:
    bits = npbch_coded_bits(mib)[subblock * NPBCH_SUBBLOCK_BITS:(subblock + 1) * NPBCH_SUBBLOCK_BITS]
    return modulate(bits ^ npbch_scrambling(nb_pcid, subblock), Scheme.QPSK)


def build_npbch_subframe(mib: Mib, cell: CellConfig, frame_number: int) -> ResourceGrid:
    subblock = (frame_number // NPBCH_REPETITIONS) % NPBCH_SUBBLOCKS
    grid = new_subframe(frame_number * SUBFRAMES_PER_FRAME, cell)
    grid = map_channel(grid, npbch_subblock_symbols(mib, cell.nb_pcid, subblock),
                       ChannelKind.NPBCH, cell)
    return insert_nrs(grid, cell)


def build_npbch_tti(mib: Mib, cell: CellConfig) -> list[ResourceGrid]:
    """The 64 NPBCH subframes (subframe #0 of each frame) of one 640 ms TTI."""
    first = mib.sfn_msbs * NPBCH_TTI_FRAMES
    return [build_npbch_subframe(mib, cell, first + i) for i in range(NPBCH_TTI_FRAMES)]


# -- NPSS / NSSS ------------------------------------------------------------

def build_npss_subframe(cell: CellConfig, frame_number: int) -> ResourceGrid:
    grid = new_subframe(frame_number * SUBFRAMES_PER_FRAME + 5, cell)
    return map_channel(grid, generate_npss().symbols, ChannelKind.NPSS, cell)


def build_nsss_subframe(cell: CellConfig, frame_number: int) -> ResourceGrid:
    grid = new_subframe(frame_number * SUBFRAMES_PER_FRAME + 9, cell)
    return map_channel(grid, generate_nsss(cell.nb_pcid, frame_number).values,
                       ChannelKind.NSSS, cell)


# -- NPDCCH -----------------------------------------------------------------

def pool_subframes(start: int, count: int) -> list[int]:
    """The next ``count`` NPDCCH/NPDSCH-capable subframes at or after ``start``."""
    out, sf = [], start
    while len(out) < count:
        if subframe_role(sf % (FRAME_NUMBER_MODULUS * SUBFRAMES_PER_FRAME)) is SubframeRole.POOL:
            out.append(sf)
        sf += 1
    return out


def npdcch_candidates(cell: CellConfig, al: int) -> list[tuple[tuple[int, int], ...]]:
    """Element sets of the NPDCCH candidates in one subframe."""
    elements = channel_elements(ChannelKind.NPDCCH, cell)
    if al == 2:
        return [elements]
    if al == 1:
        return [tuple(e for e in elements if e[0] < 6), tuple(e for e in elements if e[0] >= 6)]
    raise ValueError("aggregation level must be 1 or 2")


def npdcch_code_rate(cell: CellConfig, al: int) -> float:
    n_bits = 2 * len(npdcch_candidates(cell, al)[0])
    return (DCI_BITS + 16) / n_bits


def npdcch_symbols(dci: Dci, cell: CellConfig, n_elements: int) -> np.ndarray:
    coded = tbcc_encode(TransportBlock(dci.to_bits(), Channel.NPDCCH))
    bits = rate_match(coded, 2 * n_elements)
    return modulate(bits ^ npdcch_scrambling(cell.nb_pcid, bits.size), Scheme.QPSK)


def build_npdcch(dci, al: int, repetitions: int, cell: CellConfig,
                 start_subframe: int = 1) -> list[ResourceGrid]:
    """NPDCCH subframes; with AL 1 ``dci`` may be a pair of DCIs sharing each subframe."""
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    dcis = list(dci) if isinstance(dci, (list, tuple)) else [dci]
    cands = npdcch_candidates(cell, al)
    if len(dcis) > len(cands):
        raise ValueError(f"AL {al} carries at most {len(cands)} DCI per subframe")
    grids = []
    for sf in pool_subframes(start_subframe, repetitions):
        grid = new_subframe(sf, cell)
        for d, elements in zip(dcis, cands):
            grid = map_channel(grid, npdcch_symbols(d, cell, len(elements)),
                               ChannelKind.NPDCCH, cell, elements=elements)
        grids.append(insert_nrs(grid, cell))
    return grids


# -- NPDSCH -----------------------------------------------------------------

def default_npdsch_subframes(tbs: int, cell: CellConfig) -> int:
    cap = 2 * data_capacity(cell)
    for n in NPDSCH_SUBFRAME_CHOICES:
        if (tbs + 24) / (cap * n) <= NPDSCH_MAX_CODE_RATE:
            return n
    return NPDSCH_SUBFRAME_CHOICES[-1]


@dataclass(frozen=True)
class NpdschConfig:
    tbs: int = 680
    repetitions: int = 1
    start_position: TimingPosition = field(default_factory=lambda: TimingPosition(0, 1))
    num_subframes: Optional[int] = None

    def __post_init__(self):
        if self.tbs > 680:
            raise ValueError(f"NPDSCH TBS {self.tbs} exceeds 680")
        if self.repetitions not in NPDSCH_REPETITIONS:
            raise ValueError(f"repetitions {self.repetitions} not a power of 2 up to 512")

    def subframes(self, cell: CellConfig) -> int:
        return self.num_subframes or default_npdsch_subframes(self.tbs, cell)


def npdsch_symbols(tb: TransportBlock, cell: CellConfig, n_subframes: int) -> np.ndarray:
    """QPSK symbols for one copy of the block, shape (n_subframes, capacity)."""
    cap = data_capacity(cell)
    e = 2 * cap * n_subframes
    if tb.tbs + 24 > e:
        raise ValueError(f"TBS {tb.tbs} does not fit {n_subframes} subframes (code rate > 1)")
    bits = rate_match(tbcc_encode(tb), e)
    return modulate(bits ^ npdsch_scrambling(cell.nb_pcid, e), Scheme.QPSK).reshape(n_subframes, cap)


def build_npdsch(tb: TransportBlock, cfg: NpdschConfig, cell: CellConfig) -> list[ResourceGrid]:
    """NPDSCH subframes; the whole pattern is repeated ``cfg.repetitions`` times."""
    if tb.tbs > 680:
        raise ValueError(f"NPDSCH TBS {tb.tbs} exceeds 680")
    n_sf = cfg.subframes(cell)
    symbols = npdsch_symbols(tb, cell, n_sf)
    sfs = pool_subframes(cfg.start_position.absolute_subframe, n_sf * cfg.repetitions)
    grids = []
    for i, sf in enumerate(sfs):
        grid = map_channel(new_subframe(sf, cell), symbols[i % n_sf], ChannelKind.NPDSCH, cell)
        grids.append(insert_nrs(grid, cell))
    return grids


# -- continuous downlink stream (simulation helper) -------------------------

def _template(grid: ResourceGrid) -> np.ndarray:
    v = grid.values.copy()
    v.setflags(write=False)
    return v


@lru_cache(maxsize=64)
def _frame_templates(cell: CellConfig, mib: Mib):
    npss = _template(build_npss_subframe(cell, 0))
    nsss = [_template(build_nsss_subframe(cell, f)) for f in range(0, 8, 2)]
    npbch = [_template(build_npbch_subframe(mib, cell, mib.sfn_msbs * 64 + 8 * i))
             for i in range(NPBCH_SUBBLOCKS)]
    pool = insert_nrs(new_subframe(1, cell), cell)
    data_mask = np.zeros(pool.values.shape, bool)
    for k, l in channel_elements(ChannelKind.NPDSCH, cell):
        data_mask[k, l] = True
    return npss, nsss, npbch, data_mask


def downlink_grid_values(cell: CellConfig, mib: Mib, start_frame: int, n_frames: int,
                         rng=None, fill_pool: bool = True) -> np.ndarray:
    """Subframe grid values (n_frames*10, 12, 14) of a loaded downlink carrier.

    Pool subframes carry NRS and random QPSK data when ``fill_pool`` is set.
    """
    rng = np.random.default_rng(rng)
    npss, nsss, npbch, data_mask = _frame_templates(cell, mib)
    out = np.zeros((n_frames * SUBFRAMES_PER_FRAME,) + npss.shape, complex)
    nrs_pool = {}
    for i in range(n_frames):
        f = (start_frame + i) % FRAME_NUMBER_MODULUS
        base = i * SUBFRAMES_PER_FRAME
        out[base] = npbch[(f // 8) % 8]
        out[base + 5] = npss
        if f % 2 == 0:
            out[base + 9] = nsss[(f // 2) % 4]
        if fill_pool:
            for sf in range(SUBFRAMES_PER_FRAME):
                if subframe_role(TimingPosition(f, sf)) is SubframeRole.POOL:
                    if sf not in nrs_pool:
                        nrs_pool[sf] = insert_nrs(new_subframe(sf, cell), cell).values
                    out[base + sf] = nrs_pool[sf]
    if fill_pool:
        pool_idx = [i * 10 + sf for i in range(n_frames) for sf in range(10)
                    if subframe_role(TimingPosition((start_frame + i) % FRAME_NUMBER_MODULUS, sf))
                    is SubframeRole.POOL]
        n_data = int(data_mask.sum())
        bits = rng.integers(0, 2, (len(pool_idx), 2 * n_data), dtype=np.uint8)
        sym = modulate(bits, Scheme.QPSK)
        block = out[pool_idx]
        block[:, data_mask] = sym
        out[pool_idx] = block
    return out


def downlink_waveform(cell: CellConfig, mib: Mib, start_frame: int, n_frames: int,
                      rng=None, fill_pool: bool = True) -> Waveform:
    return Waveform(ofdm_modulate(downlink_grid_values(cell, mib, start_frame, n_frames,
                                                       rng, fill_pool)))
