"""Deterministic peak/sustained rate and link-budget calculators."""
from __future__ import annotations

import math
from dataclasses import dataclass

from nbiot.grid import CellConfig
from nbiot.mac.timeline import (ACK_SUBFRAMES, MIN_ACK_GAP, MIN_DL_GAP, MIN_UL_GAP, Direction,
                                Interval, ScheduleError, ScheduleTimeline, place_dl, place_ul)
from nbiot.numerology import NUMEROLOGY_15KHZ
from nbiot.phy_dl import default_npdsch_subframes
from nbiot.phy_ul import NpuschAllocation

THERMAL_NOISE_DBM_HZ = -174.0
NEXT_DCI_GAP = 3  # subframes from the end of a cycle to the next DCI


def _direction(direction) -> Direction:
    return direction if isinstance(direction, Direction) else Direction(str(direction).lower())


def peak_rate(direction) -> float:
    """Layer-1 peak rate in bps: the largest TBS over its shortest transmission."""
    if _direction(direction) is Direction.DL:
        sf = default_npdsch_subframes(680, CellConfig())
        return 680 / (sf * 1e-3)
    alloc = NpuschAllocation(NUMEROLOGY_15KHZ, tone_count=12)
    return 1000 / alloc.duration_s(1000)


def sustained_rate(tbs: int, tx_subframes: int, repetitions: int = 1, direction="dl",
                   npdcch_subframes: int = 1, data_gap=None, ack_gap: int = MIN_ACK_GAP,
                   ack_subframes: int = ACK_SUBFRAMES, next_gap: int = NEXT_DCI_GAP) -> float:
    """Throughput in bps of back-to-back transport blocks on one HARQ process.

    The cycle is measured on a real timeline as the distance between two
    consecutive DCIs, so illegal gaps raise ``ScheduleError``.
    """
    d = _direction(direction)
    if data_gap is None:
        data_gap = MIN_DL_GAP if d is Direction.DL else MIN_UL_GAP
    if next_gap < 1:
        raise ScheduleError("harq", "next DCI must follow the previous cycle")
    tl = ScheduleTimeline()
    start = 0
    for _ in range(2):
        dci = Interval.of(start, npdcch_subframes)
        data = Interval.of(dci.last + data_gap, tx_subframes * repetitions)
        if d is Direction.DL:
            t = place_dl(tl, dci, data, Interval.of(data.last + ack_gap, ack_subframes))
        else:
            t = place_ul(tl, dci, data)
        start = t.release - 1 + next_gap
    cycle = tl.transactions[1].npdcch.start - tl.transactions[0].npdcch.start
    return tbs / (cycle * 1e-3)


def link_budget(tx_power_dbm: float, noise_figure_db: float, bandwidth_hz: float,
                required_snr_db: float) -> float:
    """Maximum coupling loss in dB."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    noise = THERMAL_NOISE_DBM_HZ + 10 * math.log10(bandwidth_hz) + noise_figure_db
    return tx_power_dbm - (noise + required_snr_db)


@dataclass(frozen=True)
class LinkBudgetEntry:
    name: str
    tx_power_dbm: float
    noise_figure_db: float
    bandwidth_hz: float
    required_snr_db: float
    note: str = ""

    @property
    def mcl_db(self) -> float:
        return link_budget(self.tx_power_dbm, self.noise_figure_db, self.bandwidth_hz,
                           self.required_snr_db)


# Required SNRs come from the link-level Monte Carlo in this package (10% BLER,
# AWGN, ideal sync); see tests/test_acceptance.py for the regenerating sweep.
LINK_BUDGETS = (
    LinkBudgetEntry("ul_single_tone_example", 23.0, 5.0, 15e3, -11.8,
                    "formula example"),
    LinkBudgetEntry("ul_single_tone_128rep", 23.0, 5.0, 15e3, -22.6,
                    "NPUSCH F1, TBS 16, 1 tone at 15 kHz, 128 repetitions"),
)


# Figures this package deliberately does not compute: both rest on traffic
# and power models that are not available here. The maximum coupling loss is
# only reproduced as link-budget arithmetic (LINK_BUDGETS).
NOT_REPRODUCED = {
    "cell_capacity_52500_ues": "needs an external traffic model",
    "battery_life_10_years": "needs a device power profile",
}
