"""Zadoff-Chu, NPSS/NSSS, Gold and DMRS sequence generators."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

NPSS_ROOT = 5
NPSS_LENGTH = 11
NPSS_CODE_COVER = np.array([1, 1, 1, 1, -1, -1, 1, 1, 1, -1, 1])

NSSS_ZC_LENGTH = 131
NSSS_LENGTH = 132
NSSS_SHIFT_STEP = 33
NUM_NB_PCID = 504

# rows of the 128-point Sylvester-Hadamard matrix used as NSSS scrambling codes
_NSSS_HADAMARD_ROWS = (0, 31, 63, 127)


@dataclass(frozen=True)
class ZcSequence:
    length: int
    root: int
    values: np.ndarray


def generate_zc(length: int, root: int) -> ZcSequence:
    if length < 1 or length % 2 == 0:
        raise ValueError(f"ZC length must be odd and positive, got {length}")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} is not coprime to length {length}")
    n = np.arange(length)
    values = np.exp(-1j * np.pi * root * n * (n + 1) / length)
    return ZcSequence(length, root, values)


@dataclass(frozen=True)
class NpssBlock:
    code_cover: np.ndarray
    base: ZcSequence
    symbols: np.ndarray  # (11 symbols, 11 subcarriers)


@lru_cache(maxsize=1)
def _npss_block() -> NpssBlock:
    base = generate_zc(NPSS_LENGTH, NPSS_ROOT)
    symbols = NPSS_CODE_COVER[:, None] * base.values[None, :]
    symbols.setflags(write=False)
    return NpssBlock(NPSS_CODE_COVER.copy(), base, symbols)


def generate_npss() -> NpssBlock:
    """The cell-invariant NPSS block."""
    return _npss_block()


@dataclass(frozen=True)
class NsssBlock:
    nb_pcid: int
    frame_number_mod8: int
    values: np.ndarray

    @property
    def shift_index(self) -> int:
        return self.frame_number_mod8 // 2


@lru_cache(maxsize=1)
def _hadamard128() -> np.ndarray:
    h = np.array([[1]])
    while h.shape[0] < 128:
        h = np.block([[h, h], [h, -h]])
    return h


def nsss_scrambling(index: int) -> np.ndarray:
    row = _hadamard128()[_NSSS_HADAMARD_ROWS[index]]
    return row[np.arange(NSSS_LENGTH) % 128].astype(float)


def nsss_shift_index(frame_number: int) -> int:
    return (frame_number // 2) % 4


def nsss_components(nb_pcid: int, shift_index: int) -> tuple[np.ndarray, np.ndarray]:
    """(shifted ZC, scrambling) whose element-wise product is the NSSS."""
    root = nb_pcid % 126 + 3
    zc = generate_zc(NSSS_ZC_LENGTH, root).values
    n = np.arange(NSSS_LENGTH)
    shifted = zc[(n + NSSS_SHIFT_STEP * shift_index) % NSSS_ZC_LENGTH]
    return shifted, nsss_scrambling(nb_pcid // 126)


def generate_nsss(nb_pcid: int, frame_number: int) -> NsssBlock:
    if not 0 <= nb_pcid < NUM_NB_PCID:
        raise ValueError(f"NB-PCID {nb_pcid} outside 0..{NUM_NB_PCID - 1}")
    if frame_number % 2:
        raise ValueError(f"NSSS is not transmitted in odd frame {frame_number}")
    zc, scr = nsss_components(nb_pcid, nsss_shift_index(frame_number))
    return NsssBlock(nb_pcid, frame_number % 8, zc * scr)


@lru_cache(maxsize=1)
def nsss_codebook() -> np.ndarray:
    """All NSSS hypotheses, shape (504, 4, 132)."""
    book = np.empty((NUM_NB_PCID, 4, NSSS_LENGTH), dtype=complex)
    for pcid in range(NUM_NB_PCID):
        for shift in range(4):
            zc, scr = nsss_components(pcid, shift)
            book[pcid, shift] = zc * scr
    book.setflags(write=False)
    return book


def gold_sequence(c_init: int, length: int) -> np.ndarray:
    """Length-31 Gold pseudo-random bit sequence with 1600-sample warm-up."""
    nc = 1600
    total = nc + length
    x1 = np.zeros(total + 31, dtype=np.uint8)
    x2 = np.zeros(total + 31, dtype=np.uint8)
    x1[0] = 1
    x2[:31] = [(c_init >> i) & 1 for i in range(31)]
    for n in range(total):
        x1[n + 31] = x1[n + 3] ^ x1[n]
        x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n]
    return (x1[nc:nc + length] ^ x2[nc:nc + length]).astype(np.uint8)


def qpsk_from_bits(bits: np.ndarray) -> np.ndarray:
    b = np.asarray(bits, dtype=float).reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2)


@lru_cache(maxsize=4096)
def _pseudo_qpsk(c_init: int, count: int) -> np.ndarray:
    values = qpsk_from_bits(gold_sequence(c_init, 2 * count))
    values.setflags(write=False)
    return values


def pseudo_qpsk(c_init: int, count: int) -> np.ndarray:
    return _pseudo_qpsk(int(c_init), int(count))


class NpuschFormat(enum.Enum):
    F1 = 1
    F2 = 2


DMRS_SYMBOLS = {NpuschFormat.F1: (3,), NpuschFormat.F2: (2, 3, 4)}


def generate_dmrs(fmt: NpuschFormat, slot: int, nb_pcid: int,
                  tone_count: int = 1) -> tuple[tuple[int, ...], np.ndarray]:
    """DMRS symbol indexes within a slot and their values, shape (n_symbols, tone_count).

    ``nb_pcid`` may also be a CellConfig; its NB-PCID is used.
    """
    nb_pcid = getattr(nb_pcid, "nb_pcid", nb_pcid)
    fmt = NpuschFormat(fmt)
    positions = DMRS_SYMBOLS[fmt]
    c_init = (nb_pcid << 10) | ((slot % 20) << 2) | fmt.value
    values = pseudo_qpsk(c_init, len(positions) * tone_count)
    return positions, values.reshape(len(positions), tone_count)


def write_sequence_csv(path, values) -> None:
    """Dump a complex sequence as ``index,re,im`` rows."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i, v in enumerate(np.asarray(values).ravel()):
            w.writerow([i, repr(float(v.real)), repr(float(v.imag))])


def read_sequence_csv(path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
