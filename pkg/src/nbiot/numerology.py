"""Timing constants, subcarrier grids and 100 kHz raster arithmetic."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from nbiot import ConfigurationError

PRB_BANDWIDTH_HZ = 180e3
RASTER_HZ = 100e3
SUBCARRIER_SPACING_HZ = 15e3
SAMPLE_RATE_HZ = 1.92e6
DEFAULT_CARRIER_HZ = 900e6

SUBFRAME_S = 1e-3
FRAME_S = 10e-3
SUBFRAMES_PER_FRAME = 10
SYMBOLS_PER_SLOT = 7
SYMBOLS_PER_SUBFRAME = 14
SUBCARRIERS = 12
FRAME_NUMBER_MODULUS = 1024

# LTE channel bandwidth (MHz) -> number of downlink PRBs
LTE_PRBS = {3: 15, 5: 25, 10: 50, 15: 75, 20: 100}

# central 72 subcarriers (6 PRBs) carry the LTE PSS/SSS/PBCH
_MIDDLE_HALF_WIDTH_HZ = 36.5 * SUBCARRIER_SPACING_HZ
_ANCHOR_TOLERANCE_HZ = 7.5e3
_EPS = 1e-6


@dataclass(frozen=True)
class Numerology:
    subcarrier_spacing_hz: float
    slot_duration_s: float
    symbols_per_slot: int = SYMBOLS_PER_SLOT

    @property
    def tone_count(self) -> int:
        return int(round(PRB_BANDWIDTH_HZ / self.subcarrier_spacing_hz))

    @property
    def fft_size(self) -> int:
        return int(round(SAMPLE_RATE_HZ / self.subcarrier_spacing_hz))

    @property
    def subcarriers_per_prb(self) -> int:
        return self.tone_count


NUMEROLOGY_15KHZ = Numerology(15e3, 0.5e-3)
NUMEROLOGY_3P75KHZ = Numerology(3.75e3, 2e-3)


class DeploymentMode(enum.Enum):
    STANDALONE = "standalone"
    INBAND = "inband"
    GUARDBAND = "guardband"


def _check_bandwidth(lte_bandwidth_mhz) -> int:
    if lte_bandwidth_mhz not in LTE_PRBS:
        raise ConfigurationError(
            f"unsupported LTE bandwidth {lte_bandwidth_mhz} MHz; "
            f"expected one of {sorted(LTE_PRBS)}")
    return LTE_PRBS[lte_bandwidth_mhz]


def prb_center_offset_hz(prb_index: int, lte_bandwidth_mhz: int) -> float:
    """Center frequency of a PRB relative to the LTE DC subcarrier.

    Indexes outside ``[0, n_prb)`` are virtual guard-band slots that continue
    the 180 kHz grid outward.
    """
    n_prb = _check_bandwidth(lte_bandwidth_mhz)
    if n_prb % 2 == 0:
        half = n_prb // 2
        if prb_index >= half:
            return (6.5 + 12 * (prb_index - half)) * SUBCARRIER_SPACING_HZ
        return -(6.5 + 12 * (half - 1 - prb_index)) * SUBCARRIER_SPACING_HZ
    # odd PRB count: the center PRB straddles the (unused) DC subcarrier
    center = n_prb // 2
    j = prb_index - center
    if j == 0:
        return 0.0
    return math.copysign((12 * abs(j) + 0.5) * SUBCARRIER_SPACING_HZ, j)


def distance_to_raster_hz(offset_hz: float) -> float:
    """Signed distance from the nearest 100 kHz raster point (the LTE DC sits on one)."""
    nearest = round(offset_hz / RASTER_HZ) * RASTER_HZ
    return offset_hz - nearest


def is_middle_prb(prb_index: int, lte_bandwidth_mhz: int) -> bool:
    center = prb_center_offset_hz(prb_index, lte_bandwidth_mhz)
    return abs(center) - PRB_BANDWIDTH_HZ / 2 < _MIDDLE_HALF_WIDTH_HZ - _EPS


def anchor_prb_candidates(lte_bandwidth_mhz: int) -> list[int]:
    """In-band PRB indexes usable as an anchor carrier.

    A PRB qualifies when its center is within 7.5 kHz of the 100 kHz raster
    and it is not one of the middle 6 PRBs.
    """
    n_prb = _check_bandwidth(lte_bandwidth_mhz)
    out = []
    for prb in range(n_prb):
        if is_middle_prb(prb, lte_bandwidth_mhz):
            continue
        off = distance_to_raster_hz(prb_center_offset_hz(prb, lte_bandwidth_mhz))
        if abs(off) <= _ANCHOR_TOLERANCE_HZ + _EPS:
            out.append(prb)
    return out


def guardband_anchor_candidates(lte_bandwidth_mhz: int) -> list[int]:
    """Virtual PRB slots in the LTE guard band that sit near the raster.

    The slot must lie entirely inside the LTE channel bandwidth.
    """
    n_prb = _check_bandwidth(lte_bandwidth_mhz)
    edge_hz = lte_bandwidth_mhz * 1e6 / 2
    out = []
    k = 1
    while True:
        found_any = False
        for prb in (-k, n_prb - 1 + k):
            center = prb_center_offset_hz(prb, lte_bandwidth_mhz)
            if abs(center) + PRB_BANDWIDTH_HZ / 2 > edge_hz + _EPS:
                continue
            found_any = True
            if abs(distance_to_raster_hz(center)) <= _ANCHOR_TOLERANCE_HZ + _EPS:
                out.append(prb)
        if not found_any:
            break
        k += 1
    return sorted(out)


@dataclass(frozen=True)
class DeploymentConfig:
    mode: DeploymentMode = DeploymentMode.STANDALONE
    lte_bandwidth_mhz: Optional[int] = None
    prb_index: Optional[int] = None
    is_anchor: bool = True

    def __post_init__(self):
        if not isinstance(self.mode, DeploymentMode):
            object.__setattr__(self, "mode", DeploymentMode(self.mode))
        if self.mode is DeploymentMode.STANDALONE:
            return
        _check_bandwidth(self.lte_bandwidth_mhz)
        if self.mode is DeploymentMode.INBAND:
            n_prb = LTE_PRBS[self.lte_bandwidth_mhz]
            if self.prb_index is None or not 0 <= self.prb_index < n_prb:
                raise ConfigurationError(
                    f"in-band PRB index {self.prb_index} outside 0..{n_prb - 1}")
            if self.is_anchor and self.prb_index not in anchor_prb_candidates(
                    self.lte_bandwidth_mhz):
                raise ConfigurationError(
                    f"PRB {self.prb_index} is not a valid anchor for "
                    f"{self.lte_bandwidth_mhz} MHz")
        else:
            slots = guardband_anchor_candidates(self.lte_bandwidth_mhz)
            if self.prb_index is None:
                if not slots:
                    raise ConfigurationError(
                        f"no guard-band anchor slot for {self.lte_bandwidth_mhz} MHz")
                object.__setattr__(self, "prb_index", slots[0])
            elif self.is_anchor and self.prb_index not in slots:
                raise ConfigurationError(
                    f"guard-band slot {self.prb_index} is not a valid anchor")


def raster_offset(config: DeploymentConfig) -> float:
    """Signed offset in Hz of the carrier center from the nearest raster point."""
    if config.mode is DeploymentMode.STANDALONE:
        return 0.0
    center = prb_center_offset_hz(config.prb_index, config.lte_bandwidth_mhz)
    return distance_to_raster_hz(center)


def raster_hypotheses(config: Optional[DeploymentConfig] = None) -> list[float]:
    """Candidate raster offsets a UE must test before reading the MIB."""
    if config is None:
        return [0.0, 2500.0, -2500.0, 7500.0, -7500.0]
    if config.mode is DeploymentMode.STANDALONE:
        return [0.0]
    mag = 2500.0 if config.lte_bandwidth_mhz in (10, 20) else 7500.0
    return [mag, -mag]


@dataclass(frozen=True)
class TimingPosition:
    frame_number: int = 0
    subframe_number: int = 0
    slot_in_subframe: int = 0
    sample_offset: int = 0

    def __post_init__(self):
        if not 0 <= self.frame_number < FRAME_NUMBER_MODULUS:
            raise ConfigurationError(f"frame number {self.frame_number} out of range")
        if not 0 <= self.subframe_number < SUBFRAMES_PER_FRAME:
            raise ConfigurationError(f"subframe number {self.subframe_number} out of range")
        if self.slot_in_subframe not in (0, 1):
            raise ConfigurationError(f"slot {self.slot_in_subframe} out of range")

    @property
    def absolute_subframe(self) -> int:
        return self.frame_number * SUBFRAMES_PER_FRAME + self.subframe_number

    @classmethod
    def from_absolute(cls, subframe: int) -> "TimingPosition":
        subframe %= FRAME_NUMBER_MODULUS * SUBFRAMES_PER_FRAME
        return cls(subframe // SUBFRAMES_PER_FRAME, subframe % SUBFRAMES_PER_FRAME)


def timing_advance(position: TimingPosition, subframes: int) -> TimingPosition:
    if subframes < 0:
        raise ValueError("subframes must be non-negative")
    advanced = TimingPosition.from_absolute(position.absolute_subframe + subframes)
    return TimingPosition(advanced.frame_number, advanced.subframe_number,
                          position.slot_in_subframe, position.sample_offset)


def cp_lengths(fft_size: int = 128) -> list[int]:
    """Normal cyclic prefix lengths for the 7 symbols of a 15 kHz slot."""
    first = fft_size * 160 // 2048
    rest = fft_size * 144 // 2048
    return [first] + [rest] * (SYMBOLS_PER_SLOT - 1)


def symbol_starts(fft_size: int = 128) -> list[int]:
    """Sample index of each symbol's CP start within a subframe."""
    starts, pos = [], 0
    for _ in range(2):
        for cp in cp_lengths(fft_size):
            starts.append(pos)
            pos += cp + fft_size
    return starts


def useful_starts(fft_size: int = 128) -> list[int]:
    """Sample index of each symbol's FFT window within a subframe."""
    cps = cp_lengths(fft_size) * 2
    return [s + cp for s, cp in zip(symbol_starts(fft_size), cps)]


SAMPLES_PER_SUBFRAME = int(SAMPLE_RATE_HZ * SUBFRAME_S)
SAMPLES_PER_FRAME = SAMPLES_PER_SUBFRAME * SUBFRAMES_PER_FRAME
