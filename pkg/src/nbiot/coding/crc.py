"""CRC attachment as a GF(2) matrix product (batch friendly)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

CRC24A = 0x1864CFB
CRC16 = 0x11021


def _degree(poly: int) -> int:
    return poly.bit_length() - 1


@lru_cache(maxsize=64)
def _crc_matrix(k: int, poly: int) -> np.ndarray:
    L = _degree(poly)
    mask = (1 << L) - 1
    # r holds x^n mod poly, starting at n = L
    r = poly & mask
    rows = np.zeros((k, L), dtype=np.uint8)
    for n in range(k):
        # bit at index k-1-n multiplies x^(n+L)
        rows[k - 1 - n] = [(r >> (L - 1 - j)) & 1 for j in range(L)]
        carry = r >> (L - 1)
        r = ((r << 1) & mask) ^ (poly & mask if carry else 0)
    rows.setflags(write=False)
    return rows


def crc_bits(bits: np.ndarray, poly: int = CRC24A) -> np.ndarray:
    """Parity bits of ``bits`` (last axis), MSB first."""
    bits = np.asarray(bits, dtype=np.uint8)
    m = _crc_matrix(bits.shape[-1], poly)
    return ((bits.astype(np.int64) @ m) & 1).astype(np.uint8)


def attach_crc(bits: np.ndarray, poly: int = CRC24A) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc_bits(bits, poly)], axis=-1)


def check_crc(bits_with_crc: np.ndarray, poly: int = CRC24A):
    """True where the trailing CRC matches; works on batches along the last axis."""
    bits_with_crc = np.asarray(bits_with_crc, dtype=np.uint8)
    L = _degree(poly)
    payload, parity = bits_with_crc[..., :-L], bits_with_crc[..., -L:]
    ok = np.all(crc_bits(payload, poly) == parity, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok
