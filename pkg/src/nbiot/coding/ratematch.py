"""Sub-block interleaving and single-redundancy-version circular-buffer rate matching."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

_COLUMNS = 32
_COLUMN_PERMUTATION = (1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31,
                       0, 16, 8, 24, 4, 20, 12, 28, 2, 18, 10, 26, 6, 22, 14, 30)
RV0_OFFSET = 0


@lru_cache(maxsize=128)
def subblock_permutation(d: int) -> np.ndarray:
    """out[i] = in[perm[i]] for a 32-column interleaver with leading dummy bits."""
    rows = -(-d // _COLUMNS)
    n_dummy = rows * _COLUMNS - d
    idx = np.concatenate([np.full(n_dummy, -1), np.arange(d)]).reshape(rows, _COLUMNS)
    read = idx[:, list(_COLUMN_PERMUTATION)].T.ravel()
    perm = read[read >= 0]
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=128)
def buffer_order(stream_len: int, interlace_parity: bool) -> np.ndarray:
    """Flat index into the (3, stream_len) stream array for each circular-buffer position."""
    perm = subblock_permutation(stream_len)
    s0 = perm
    s1 = stream_len + perm
    s2 = 2 * stream_len + perm
    if interlace_parity:
        tail = np.empty(2 * stream_len, dtype=np.int64)
        tail[0::2] = s1
        tail[1::2] = s2
        order = np.concatenate([s0, tail])
    else:
        order = np.concatenate([s0, s1, s2])
    order.setflags(write=False)
    return order


def build_buffer(streams: np.ndarray, interlace_parity: bool = False) -> np.ndarray:
    streams = np.asarray(streams)
    return streams.reshape(*streams.shape[:-2], -1)[..., buffer_order(streams.shape[-1], interlace_parity)]


def split_buffer(buffer_values: np.ndarray, stream_len: int,
                 interlace_parity: bool = False) -> np.ndarray:
    """Inverse of :func:`build_buffer`; returns (..., 3, stream_len)."""
    order = buffer_order(stream_len, interlace_parity)
    out = np.zeros(buffer_values.shape[:-1] + (3 * stream_len,), dtype=buffer_values.dtype)
    out[..., order] = buffer_values
    return out.reshape(*buffer_values.shape[:-1], 3, stream_len)


def circular_indices(buffer_len: int, target_length: int, offset: int = RV0_OFFSET) -> np.ndarray:
    if target_length < 1:
        raise ValueError("rate-matching target length must be at least 1")
    return (offset + np.arange(target_length)) % buffer_len


def select_bits(buffer_bits: np.ndarray, target_length: int) -> np.ndarray:
    buffer_bits = np.asarray(buffer_bits)
    return buffer_bits[..., circular_indices(buffer_bits.shape[-1], target_length)]


def combine_soft(llr: np.ndarray, buffer_len: int) -> np.ndarray:
    """Accumulate rate-matched LLRs back onto circular-buffer positions."""
    llr = np.asarray(llr, dtype=float)
    idx = circular_indices(buffer_len, llr.shape[-1])
    flat = llr.reshape(-1, llr.shape[-1])
    out = np.zeros((flat.shape[0], buffer_len))
    for row_out, row_in in zip(out, flat):
        np.add.at(row_out, idx, row_in)
    return out.reshape(*llr.shape[:-1], buffer_len)
