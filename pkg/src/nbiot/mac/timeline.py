"""Subframe-level HARQ scheduling timeline for a single UE."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from nbiot.grid import CellConfig
from nbiot.phy_dl import Dci, NpdschConfig
from nbiot.phy_ul import NpuschAllocation, NpuschFormat

MIN_DL_GAP = 4    # NPDCCH last subframe -> NPDSCH first subframe
MIN_ACK_GAP = 12  # NPDSCH last subframe -> HARQ-ACK first subframe
MIN_UL_GAP = 8    # NPDCCH last subframe -> NPUSCH first subframe
ACK_SUBFRAMES = 2  # one format-2 resource unit on a 15 kHz tone


class Direction(enum.Enum):
    DL = "dl"
    UL = "ul"


class Harq(enum.Enum):
    NONE = "none"
    DL_PENDING = "dl_pending"
    UL_PENDING = "ul_pending"


class ScheduleError(ValueError):
    """A placement that would break a timing, occupancy or HARQ rule.

    ``constraint`` names the rule: ``dl_gap``, ``ack_gap``, ``ul_gap``,
    ``occupied``, ``harq`` or ``interval``.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class Interval:
    """Half-open subframe interval ``[start, stop)``."""
    start: int
    stop: int

    def __post_init__(self):
        if self.stop <= self.start:
            raise ScheduleError("interval", f"empty interval [{self.start}, {self.stop})")

    @classmethod
    def of(cls, start: int, length: int) -> "Interval":
        return cls(start, start + length)

    @property
    def last(self) -> int:
        return self.stop - 1

    def __len__(self):
        return self.stop - self.start

    def __iter__(self):
        return iter(range(self.start, self.stop))


def gap(earlier: Interval, later: Interval) -> int:
    """Subframes from the last subframe of ``earlier`` to the first of ``later``."""
    return later.start - earlier.last


@dataclass(frozen=True)
class Transaction:
    direction: Direction
    npdcch: Interval
    data: Interval
    ack: Optional[Interval]
    ndi: int = 0

    @property
    def release(self) -> int:
        """First subframe at which the HARQ process is free again."""
        return (self.ack or self.data).stop


@dataclass
class ScheduleTimeline:
    occupancy: dict = field(default_factory=dict)  # subframe -> (channel, Direction)
    transactions: list = field(default_factory=list)

    @property
    def pending_deadlines(self) -> list[int]:
        return [t.release for t in self.transactions]

    def active_harq(self, subframe: int) -> Harq:
        for t in reversed(self.transactions):
            if t.npdcch.start <= subframe < t.release:
                return Harq.DL_PENDING if t.direction is Direction.DL else Harq.UL_PENDING
        return Harq.NONE

    def busy_until(self) -> int:
        return max(self.pending_deadlines, default=0)

    def _claim(self, pieces):
        for name, iv, direction in pieces:
            for sf in iv:
                if sf in self.occupancy:
                    other = self.occupancy[sf]
                    raise ScheduleError("occupied", f"{name} subframe {sf} already holds {other[0]}")
        for name, iv, direction in pieces:
            for sf in iv:
                self.occupancy[sf] = (name, direction)


def _check_harq(tl: ScheduleTimeline, npdcch: Interval):
    if npdcch.start < tl.busy_until():
        raise ScheduleError("harq", f"HARQ process busy until subframe {tl.busy_until()}")


def place_dl(tl: ScheduleTimeline, npdcch: Interval, npdsch: Interval, ack: Interval,
             ndi: int = 0) -> Transaction:
    """Place an NPDCCH/NPDSCH/HARQ-ACK triple; the timeline is unchanged on error."""
    _check_harq(tl, npdcch)
    if gap(npdcch, npdsch) < MIN_DL_GAP:
        raise ScheduleError("dl_gap", f"NPDSCH {gap(npdcch, npdsch)} subframes after NPDCCH")
    if gap(npdsch, ack) < MIN_ACK_GAP:
        raise ScheduleError("ack_gap", f"HARQ-ACK {gap(npdsch, ack)} subframes after NPDSCH")
    tl._claim([("npdcch", npdcch, Direction.DL), ("npdsch", npdsch, Direction.DL),
               ("ack", ack, Direction.UL)])
    t = Transaction(Direction.DL, npdcch, npdsch, ack, ndi)
    tl.transactions.append(t)
    return t


def place_ul(tl: ScheduleTimeline, npdcch: Interval, npusch: Interval, ndi: int = 0) -> Transaction:
    """Place an uplink grant and its NPUSCH; the next DCI acts as the acknowledgement."""
    _check_harq(tl, npdcch)
    if gap(npdcch, npusch) < MIN_UL_GAP:
        raise ScheduleError("ul_gap", f"NPUSCH {gap(npdcch, npusch)} subframes after NPDCCH")
    tl._claim([("npdcch", npdcch, Direction.DL), ("npusch", npusch, Direction.UL)])
    t = Transaction(Direction.UL, npdcch, npusch, None, ndi)
    tl.transactions.append(t)
    return t


def schedule_dl(tl: ScheduleTimeline, dci: Dci, cfg: NpdschConfig, npdcch_start: int,
                npdcch_subframes: int = 1, cell: Optional[CellConfig] = None,
                ack_subframes: int = ACK_SUBFRAMES) -> Transaction:
    """Place a downlink assignment using the offsets carried in the DCI."""
    if dci.uplink:
        raise ScheduleError("interval", "uplink DCI passed to schedule_dl")
    cell = cell or CellConfig()
    npdcch = Interval.of(npdcch_start, npdcch_subframes)
    data = Interval.of(npdcch.last + dci.time_offset_subframes, cfg.subframes(cell) * cfg.repetitions)
    ack = Interval.of(data.last + dci.ack_delay_subframes, ack_subframes)
    return place_dl(tl, npdcch, data, ack, dci.new_data_indicator)


def npusch_subframes(alloc: NpuschAllocation, tbs: int) -> int:
    return math.ceil(round(alloc.duration_s(tbs) * 1e3, 9))


def schedule_ul(tl: ScheduleTimeline, dci: Dci, alloc: NpuschAllocation, npdcch_start: int,
                npdcch_subframes: int = 1) -> Transaction:
    if not dci.uplink:
        raise ScheduleError("interval", "downlink DCI passed to schedule_ul")
    if alloc.format is not NpuschFormat.F1:
        raise ScheduleError("interval", "uplink grants carry format-1 data")
    npdcch = Interval.of(npdcch_start, npdcch_subframes)
    data = Interval.of(npdcch.last + dci.time_offset_subframes, npusch_subframes(alloc, dci.tbs))
    return place_ul(tl, npdcch, data, dci.new_data_indicator)


def violations(tl: ScheduleTimeline) -> list[str]:
    """Independent recheck of every rule over the accepted transactions."""
    out = []
    seen = {}
    for i, t in enumerate(tl.transactions):
        g_min = MIN_DL_GAP if t.direction is Direction.DL else MIN_UL_GAP
        if gap(t.npdcch, t.data) < g_min:
            out.append(f"{i}: data gap")
        if t.ack is not None and gap(t.data, t.ack) < MIN_ACK_GAP:
            out.append(f"{i}: ack gap")
        for iv in (t.npdcch, t.data) + ((t.ack,) if t.ack else ()):
            for sf in iv:
                if sf in seen:
                    out.append(f"{i}: subframe {sf} shared with {seen[sf]}")
                seen[sf] = i
        for j, u in enumerate(tl.transactions[:i]):
            if t.npdcch.start < u.release and u.npdcch.start < t.release:
                out.append(f"{i}: overlaps HARQ process of {j}")
    return out
