"""Coverage classes and preamble power control."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from nbiot.phy_ul import NprachConfig

MAX_COVERAGE_CLASSES = 3


@dataclass(frozen=True)
class CoverageClass:
    level: int
    rsrp_threshold_dbm: float
    nprach_config: NprachConfig = field(default_factory=NprachConfig)
    preamble_tx_power_dbm: float = 23.0

    def __post_init__(self):
        if not 0 <= self.level < MAX_COVERAGE_CLASSES:
            raise ValueError(f"coverage level {self.level} outside 0..2")


def validate_classes(classes) -> list[CoverageClass]:
    classes = sorted(classes, key=lambda c: c.level)
    if not classes:
        raise ValueError("at least one coverage class is required")
    if len(classes) > MAX_COVERAGE_CLASSES:
        raise ValueError("a cell configures at most three coverage classes")
    if [c.level for c in classes] != list(range(len(classes))):
        raise ValueError("coverage levels must be 0, 1, ... without gaps")
    th = [c.rsrp_threshold_dbm for c in classes]
    if any(b >= a for a, b in zip(th, th[1:])):
        raise ValueError("RSRP thresholds must decrease strictly with level")
    return classes


def select_coverage_level(measured_rsrp_dbm: float, classes) -> CoverageClass:
    """Best class whose threshold the measurement reaches; equality counts as reaching it.

    The worst configured class is the catch-all for anything below.
    """
    classes = validate_classes(classes)
    for c in classes:
        if measured_rsrp_dbm >= c.rsrp_threshold_dbm:
            return c
    return classes[-1]


def preamble_power(cls: CoverageClass, measured_rsrp_dbm: float, nrs_power_dbm: float = 32.0,
                   target_received_dbm: float = -120.0, worst: bool = False) -> float:
    """Open-loop preamble power capped by the class maximum.

    The worst class always transmits at its cap.
    """
    if worst:
        return cls.preamble_tx_power_dbm
    path_loss = nrs_power_dbm - measured_rsrp_dbm
    return min(cls.preamble_tx_power_dbm, target_received_dbm + path_loss)


def default_classes() -> list[CoverageClass]:
    """Three classes on disjoint subcarriers with 1/8/32 preamble repetitions.

    Only the level-0 resource is split between single- and multi-tone capable UEs.
    """
    def cfg(reps, offset, n, boundary=None):
        period = max(80, 2 ** math.ceil(math.log2(reps * 6.4 + 8)))
        return NprachConfig(format=0, repetitions=reps, periodicity_ms=period,
                            subcarrier_offset=offset, num_subcarriers=n,
                            multitone_partition_boundary=boundary)
    return [CoverageClass(0, -110.0, cfg(1, 0, 24, 12)), CoverageClass(1, -120.0, cfg(8, 24, 12)),
            CoverageClass(2, -math.inf, cfg(32, 36, 12))]
