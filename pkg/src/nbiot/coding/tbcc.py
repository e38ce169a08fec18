"""Rate-1/3 tail-biting convolutional code (K=7, generators 133/171/165 octal)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

CONSTRAINT_LENGTH = 7
GENERATORS = (0o133, 0o171, 0o165)
NUM_STATES = 1 << (CONSTRAINT_LENGTH - 1)
WRAP_STEPS = 48


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@lru_cache(maxsize=1)
def _trellis():
    """Predecessor states and expected output signs for every next state."""
    prev = np.zeros((NUM_STATES, 2), dtype=np.int64)
    signs = np.zeros((NUM_STATES, 2, 3))
    for ns in range(NUM_STATES):
        u = ns >> 5
        for j in range(2):
            ps = ((ns & 31) << 1) | j
            word = (u << 6) | ps
            prev[ns, j] = ps
            signs[ns, j] = [1 - 2 * _parity(word & g) for g in GENERATORS]
    return prev, signs


def initial_state(bits: np.ndarray) -> int:
    """Tail-biting start state: the last six input bits, newest in the MSB."""
    s = 0
    for i in range(6):
        s |= int(bits[-1 - i]) << (5 - i)
    return s


def encode_streams(bits: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Encode into three parity streams; returns (streams (3, K), start, end state)."""
    bits = np.asarray(bits, dtype=np.uint8)
    k = bits.size
    if k < 6:
        raise ValueError("tail-biting encoding needs at least 6 bits")
    state = start = initial_state(bits)
    out = np.empty((3, k), dtype=np.uint8)
    for i, u in enumerate(bits):
        word = (int(u) << 6) | state
        for j, g in enumerate(GENERATORS):
            out[j, i] = _parity(word & g)
        state = (int(u) << 5) | (state >> 1)
    return out, start, state


def viterbi_streams(llr: np.ndarray) -> np.ndarray:
    """Wrap-around Viterbi decode.

    ``llr`` has shape (..., 3, K) with positive values favouring bit 0.
    Returns hard decisions of shape (..., K).
    """
    llr = np.asarray(llr, dtype=float)
    batch_shape = llr.shape[:-2]
    k = llr.shape[-1]
    x = llr.reshape(-1, 3, k)
    b = x.shape[0]
    w = min(WRAP_STEPS, k)
    ext = np.concatenate([x[:, :, k - w:], x, x[:, :, :w]], axis=2)
    t_total = ext.shape[2]
    prev, signs = _trellis()
    sign_mat = signs.reshape(-1, 3).T  # (3, 128)
    pm = np.zeros((b, NUM_STATES))
    decisions = np.empty((t_total, b, NUM_STATES), dtype=np.uint8)
    for t in range(t_total):
        bm = (ext[:, :, t] @ sign_mat).reshape(b, NUM_STATES, 2)
        cand = pm[:, prev] + bm
        choice = np.argmax(cand, axis=2)
        decisions[t] = choice
        pm = np.take_along_axis(cand, choice[..., None], axis=2)[..., 0]
        pm -= pm.max(axis=1, keepdims=True)
    state = np.argmax(pm, axis=1)
    bits = np.empty((b, t_total), dtype=np.uint8)
    rows = np.arange(b)
    for t in range(t_total - 1, -1, -1):
        bits[:, t] = state >> 5
        j = decisions[t, rows, state]
        state = prev[state, j]
    return bits[:, w:w + k].reshape(*batch_shape, k)
