"""Subframe resource grids and LTE-coexistence resource mapping."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from nbiot import ConfigurationError
from nbiot.numerology import (SUBCARRIERS, SYMBOLS_PER_SUBFRAME, DeploymentConfig,
                              DeploymentMode, TimingPosition)
from nbiot.sequences import pseudo_qpsk

N_RE = SUBCARRIERS * SYMBOLS_PER_SUBFRAME
SYNC_FIRST_SYMBOL = 3  # NPSS/NSSS/NPBCH never use the first three symbols
NRS_SYMBOLS = (5, 6, 12, 13)
NPBCH_CRS_PORTS = 4
NPBCH_NRS_PORTS = 2


class Usage(enum.IntEnum):
    UNUSED = 0
    NB_DATA = 1
    NRS = 2
    LTE_CRS = 3
    LTE_PDCCH = 4
    PUNCTURED = 5


class SubframeRole(enum.Enum):
    NPBCH = "npbch"
    NPSS = "npss"
    NSSS = "nsss"
    POOL = "npdcch/npdsch"


class ChannelKind(enum.Enum):
    NPSS = "npss"
    NSSS = "nsss"
    NPBCH = "npbch"
    NPDCCH = "npdcch"
    NPDSCH = "npdsch"


_ROLE_FOR_KIND = {
    ChannelKind.NPSS: SubframeRole.NPSS,
    ChannelKind.NSSS: SubframeRole.NSSS,
    ChannelKind.NPBCH: SubframeRole.NPBCH,
    ChannelKind.NPDCCH: SubframeRole.POOL,
    ChannelKind.NPDSCH: SubframeRole.POOL,
}


class MappingError(ValueError):
    pass


def identity_pcid_map(nb_pcid: int) -> int:
    return nb_pcid


@dataclass(frozen=True)
class CellConfig:
    nb_pcid: int = 0
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    lte_pcid: Optional[int] = None
    lte_crs_ports: int = 2
    lte_pdcch_symbols: Optional[int] = None
    nrs_ports: int = 1
    pcid_map: Callable[[int], int] = identity_pcid_map

    def __post_init__(self):
        if not 0 <= self.nb_pcid < 504:
            raise ConfigurationError(f"NB-PCID {self.nb_pcid} outside 0..503")
        if self.lte_pcid is None:
            object.__setattr__(self, "lte_pcid", self.pcid_map(self.nb_pcid))
        elif self.lte_pcid != self.pcid_map(self.nb_pcid):
            raise ConfigurationError("LTE PCID is not derivable from the NB-PCID")
        if self.lte_crs_ports not in (1, 2, 4):
            raise ConfigurationError(f"unsupported CRS port count {self.lte_crs_ports}")
        if self.nrs_ports not in (1, 2):
            raise ConfigurationError(f"unsupported NRS port count {self.nrs_ports}")
        if self.deployment.mode is DeploymentMode.INBAND:
            pdcch = 3 if self.lte_pdcch_symbols is None else self.lte_pdcch_symbols
            if not 0 <= pdcch <= 3:
                raise ConfigurationError("LTE control region must span 0..3 symbols")
        else:
            pdcch = 0
        object.__setattr__(self, "lte_pdcch_symbols", pdcch)

    @property
    def inband(self) -> bool:
        return self.deployment.mode is DeploymentMode.INBAND


def subframe_role(position) -> SubframeRole:
    if isinstance(position, int):
        position = TimingPosition.from_absolute(position)
    sf = position.subframe_number
    if sf == 0:
        return SubframeRole.NPBCH
    if sf == 5:
        return SubframeRole.NPSS
    if sf == 9 and position.frame_number % 2 == 0:
        return SubframeRole.NSSS
    return SubframeRole.POOL


def crs_elements(lte_pcid: int, ports: int) -> frozenset:
    """(subcarrier, symbol) pairs used by LTE CRS inside one PRB pair."""
    shift = lte_pcid % 6
    out = set()
    for port in range(ports):
        for slot in range(2):
            if port < 2:
                syms = ((0, 0 if port == 0 else 3), (4, 3 if port == 0 else 0))
            else:
                v = 3 * slot if port == 2 else 3 + 3 * slot
                syms = ((1, v),)
            for l, v in syms:
                for m in range(2):
                    out.add((6 * m + (v + shift) % 6, 7 * slot + l))
    return frozenset(out)


def pdcch_elements(symbols: int) -> frozenset:
    return frozenset((k, l) for l in range(symbols) for k in range(SUBCARRIERS))


def lte_reserved_elements(cell: CellConfig) -> frozenset:
    """Elements LTE occupies in an in-band PRB; empty for other deployments."""
    if not cell.inband:
        return frozenset()
    return crs_elements(cell.lte_pcid, cell.lte_crs_ports) | pdcch_elements(cell.lte_pdcch_symbols)


def nrs_elements(nb_pcid: int, ports: int) -> list[list[tuple[int, int]]]:
    """Per-port NRS positions, 8 per port, symbol-major order."""
    v = nb_pcid % 6
    out = []
    for port in range(ports):
        first = (v + 3 * port) % 6
        out.append([(k, l) for l in NRS_SYMBOLS for k in (first, first + 6)])
    return out


def nrs_values(nb_pcid: int, subframe: int, port: int = 0) -> np.ndarray:
    c_init = (nb_pcid << 12) | ((subframe % 10) << 2) | port
    return pseudo_qpsk(c_init, 8)


def _frequency_first(elements: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    return sorted(elements, key=lambda kl: (kl[1], kl[0]))


@lru_cache(maxsize=4096)
def channel_elements(kind: ChannelKind, cell: CellConfig) -> tuple[tuple[int, int], ...]:
    """Mapping order of a channel's elements.

    NPSS and NSSS list every nominal position (punctured ones included),
    the data-bearing channels only the usable ones.
    """
    kind = ChannelKind(kind)
    if kind is ChannelKind.NPSS:
        return tuple((k, SYNC_FIRST_SYMBOL + l) for l in range(11) for k in range(11))
    if kind is ChannelKind.NSSS:
        return tuple((n % SUBCARRIERS, SYNC_FIRST_SYMBOL + n // SUBCARRIERS) for n in range(132))
    if kind is ChannelKind.NPBCH:
        blocked = crs_elements(cell.lte_pcid, NPBCH_CRS_PORTS)
        for port in nrs_elements(cell.nb_pcid, NPBCH_NRS_PORTS):
            blocked |= set(port)
        return tuple(_frequency_first(
            (k, l) for l in range(SYNC_FIRST_SYMBOL, SYMBOLS_PER_SUBFRAME)
            for k in range(SUBCARRIERS) if (k, l) not in blocked))
    blocked = set(lte_reserved_elements(cell))
    for port in nrs_elements(cell.nb_pcid, cell.nrs_ports):
        blocked |= set(port)
    return tuple(_frequency_first(
        (k, l) for l in range(SYMBOLS_PER_SUBFRAME)
        for k in range(SUBCARRIERS) if (k, l) not in blocked))


def data_capacity(cell: CellConfig, kind: ChannelKind = ChannelKind.NPDSCH) -> int:
    """Number of QPSK symbols one subframe of ``kind`` carries."""
    return len(channel_elements(kind, cell))


@dataclass
class ResourceGrid:
    values: np.ndarray = field(default_factory=lambda: np.zeros((SUBCARRIERS, SYMBOLS_PER_SUBFRAME), complex))
    usage: np.ndarray = field(default_factory=lambda: np.zeros((SUBCARRIERS, SYMBOLS_PER_SUBFRAME), np.uint8))
    subframe: int = 0  # absolute subframe index

    @property
    def role(self) -> SubframeRole:
        return subframe_role(self.subframe)

    @property
    def position(self) -> TimingPosition:
        return TimingPosition.from_absolute(self.subframe)

    def copy(self) -> "ResourceGrid":
        return ResourceGrid(self.values.copy(), self.usage.copy(), self.subframe)

    def count(self, usage: Usage) -> int:
        return int(np.count_nonzero(self.usage == usage))


def new_subframe(subframe, cell: CellConfig) -> ResourceGrid:
    """Empty grid with the LTE-occupied elements labelled."""
    if isinstance(subframe, TimingPosition):
        subframe = subframe.absolute_subframe
    grid = ResourceGrid(subframe=int(subframe))
    if cell.inband:
        for k, l in pdcch_elements(cell.lte_pdcch_symbols):
            grid.usage[k, l] = Usage.LTE_PDCCH
        for k, l in crs_elements(cell.lte_pcid, cell.lte_crs_ports):
            grid.usage[k, l] = Usage.LTE_CRS
    return grid


def map_channel(grid: ResourceGrid, channel_symbols, kind: ChannelKind, cell: CellConfig,
                elements: Optional[Iterable[tuple[int, int]]] = None) -> ResourceGrid:
    """Place channel symbols on a copy of ``grid``.

    NPSS/NSSS elements that hit LTE CRS are punctured; every other channel
    is mapped around the reserved elements. ``elements`` restricts data
    channels to a subset (an NPDCCH candidate, for instance).
    """
    kind = ChannelKind(kind)
    if grid.role is not _ROLE_FOR_KIND[kind]:
        raise MappingError(f"{kind.value} cannot occupy a {grid.role.value} subframe")
    out = grid.copy()
    symbols = np.asarray(channel_symbols, dtype=complex).ravel()
    if kind in (ChannelKind.NPSS, ChannelKind.NSSS):
        positions = channel_elements(kind, cell)
        if symbols.size != len(positions):
            raise MappingError(f"{kind.value} needs {len(positions)} symbols, got {symbols.size}")
        crs = crs_elements(cell.lte_pcid, cell.lte_crs_ports) if cell.inband else frozenset()
        for (k, l), s in zip(positions, symbols):
            if (k, l) in crs:
                out.values[k, l] = 0
                out.usage[k, l] = Usage.PUNCTURED
            else:
                out.values[k, l] = s
                out.usage[k, l] = Usage.NB_DATA
        return out
    positions = channel_elements(kind, cell) if elements is None else tuple(elements)
    if symbols.size > len(positions):
        raise MappingError(f"{symbols.size} symbols exceed the {len(positions)} available elements")
    for (k, l), s in zip(positions, symbols):
        if out.usage[k, l] not in (Usage.UNUSED, Usage.NB_DATA):
            raise MappingError(f"element {(k, l)} is reserved")
        out.values[k, l] = s
        out.usage[k, l] = Usage.NB_DATA
    return out


def demap_channel(values: np.ndarray, kind: ChannelKind, cell: CellConfig,
                  count: Optional[int] = None,
                  elements: Optional[Iterable[tuple[int, int]]] = None) -> np.ndarray:
    """Read channel symbols back in mapping order from a (..., 12, 14) array.

    For NPSS/NSSS the punctured positions are skipped.
    """
    kind = ChannelKind(kind)
    positions = list(channel_elements(kind, cell) if elements is None else elements)
    if kind in (ChannelKind.NPSS, ChannelKind.NSSS) and cell.inband:
        crs = crs_elements(cell.lte_pcid, cell.lte_crs_ports)
        positions = [p for p in positions if p not in crs]
    if count is not None:
        positions = positions[:count]
    k = np.array([p[0] for p in positions], dtype=int)
    l = np.array([p[1] for p in positions], dtype=int)
    return np.asarray(values)[..., k, l]


def insert_nrs(grid: ResourceGrid, cell: CellConfig) -> ResourceGrid:
    if grid.role not in (SubframeRole.NPBCH, SubframeRole.POOL):
        return grid.copy()
    out = grid.copy()
    for port, positions in enumerate(nrs_elements(cell.nb_pcid, cell.nrs_ports)):
        vals = nrs_values(cell.nb_pcid, grid.subframe, port)
        for (k, l), v in zip(positions, vals):
            if out.usage[k, l] in (Usage.LTE_CRS, Usage.LTE_PDCCH, Usage.NB_DATA):
                raise MappingError(f"NRS collides at {(k, l)}")
            out.values[k, l] = v
            out.usage[k, l] = Usage.NRS
    return out


def nb_energy_on_lte(grid: ResourceGrid) -> float:
    mask = (grid.usage == Usage.LTE_CRS) | (grid.usage == Usage.LTE_PDCCH)
    return float(np.sum(np.abs(grid.values[mask]) ** 2))


def write_grid_csv(path, grids: Iterable[ResourceGrid]) -> None:
    """Dump grids as ``subframe,symbol,subcarrier,usage,re,im`` rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subframe", "symbol", "subcarrier", "usage", "re", "im"])
        for g in grids:
            for l in range(SYMBOLS_PER_SUBFRAME):
                for k in range(SUBCARRIERS):
                    v = g.values[k, l]
                    w.writerow([g.subframe, l, k, Usage(g.usage[k, l]).name,
                                repr(float(v.real)), repr(float(v.imag))])


def read_grid_csv(path) -> list[ResourceGrid]:
    grids: dict[int, ResourceGrid] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            sf = int(row["subframe"])
            g = grids.setdefault(sf, ResourceGrid(subframe=sf))
            k, l = int(row["subcarrier"]), int(row["symbol"])
            g.values[k, l] = complex(float(row["re"]), float(row["im"]))
            g.usage[k, l] = Usage[row["usage"]]
    return [grids[k] for k in sorted(grids)]
