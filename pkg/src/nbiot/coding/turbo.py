"""LTE-family turbo code: two 8-state RSC constituents (13/15 octal) and a QPP interleaver."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# block size K -> (f1, f2) for the quadratic permutation pi(i) = (f1*i + f2*i^2) mod K
QPP_PARAMETERS = {
    40: (3, 10), 48: (7, 12), 56: (19, 42), 64: (7, 16), 80: (11, 20),
    112: (41, 84), 144: (17, 108), 280: (103, 210), 352: (21, 44),
    464: (247, 58), 704: (155, 44), 1024: (31, 64),
}
TAIL_BITS = 12
_NUM_STATES = 8


def qpp_interleaver(k: int) -> np.ndarray:
    if k not in QPP_PARAMETERS:
        raise ValueError(f"no QPP parameters for block size {k}")
    f1, f2 = QPP_PARAMETERS[k]
    i = np.arange(k, dtype=np.int64)
    return (f1 * i + f2 * i * i) % k


@lru_cache(maxsize=1)
def _rsc_trellis():
    """next_state[s, u], parity[s, u] for the 13/15 recursive systematic encoder."""
    nxt = np.zeros((_NUM_STATES, 2), dtype=np.int64)
    par = np.zeros((_NUM_STATES, 2), dtype=np.uint8)
    for s in range(_NUM_STATES):
        s1, s2, s3 = (s >> 2) & 1, (s >> 1) & 1, s & 1
        for u in range(2):
            fb = u ^ s2 ^ s3          # feedback 1 + D^2 + D^3
            par[s, u] = fb ^ s1 ^ s3  # feedforward 1 + D + D^3
            nxt[s, u] = (fb << 2) | (s1 << 1) | s2
    return nxt, par


@lru_cache(maxsize=1)
def _predecessors():
    nxt, _ = _rsc_trellis()
    pred_s = np.zeros((_NUM_STATES, 2), dtype=np.int64)
    pred_u = np.zeros((_NUM_STATES, 2), dtype=np.int64)
    fill = np.zeros(_NUM_STATES, dtype=int)
    for s in range(_NUM_STATES):
        for u in range(2):
            ns = nxt[s, u]
            pred_s[ns, fill[ns]] = s
            pred_u[ns, fill[ns]] = u
            fill[ns] += 1
    return pred_s, pred_u


def _rsc_encode(bits: np.ndarray):
    nxt, par = _rsc_trellis()
    s = 0
    z = np.empty(bits.size, dtype=np.uint8)
    for i, u in enumerate(bits):
        z[i] = par[s, u]
        s = nxt[s, u]
    # termination: drive feedback to zero
    tail_x, tail_z = [], []
    for _ in range(3):
        s2, s3 = (s >> 1) & 1, s & 1
        u = s2 ^ s3
        tail_x.append(u)
        tail_z.append(par[s, u])
        s = nxt[s, u]
    assert s == 0
    return z, np.array(tail_x, np.uint8), np.array(tail_z, np.uint8)


def encode_streams(bits: np.ndarray) -> np.ndarray:
    """Three streams of length K+4: systematic, parity 1, parity 2 (with termination)."""
    bits = np.asarray(bits, dtype=np.uint8)
    k = bits.size
    pi = qpp_interleaver(k)
    z1, tx1, tz1 = _rsc_encode(bits)
    z2, tx2, tz2 = _rsc_encode(bits[pi])
    # tail ordering follows the LTE convention across the three streams
    d0 = np.concatenate([bits, [tx1[0], tz1[1], tx2[0], tz2[1]]])
    d1 = np.concatenate([z1, [tz1[0], tx1[2], tz2[0], tx2[2]]])
    d2 = np.concatenate([z2, [tx1[1], tz1[2], tx2[1], tz2[2]]])
    return np.stack([d0, d1, d2]).astype(np.uint8)


def _split_tails(llr: np.ndarray):
    """Undo the tail interleaving: per-encoder (x, z) tail LLRs, each (..., 3)."""
    k = llr.shape[-1] - 4
    d0, d1, d2 = llr[..., 0, k:], llr[..., 1, k:], llr[..., 2, k:]
    tx1 = np.stack([d0[..., 0], d2[..., 0], d1[..., 1]], axis=-1)
    tz1 = np.stack([d1[..., 0], d0[..., 1], d2[..., 1]], axis=-1)
    tx2 = np.stack([d0[..., 2], d2[..., 2], d1[..., 3]], axis=-1)
    tz2 = np.stack([d1[..., 2], d0[..., 3], d2[..., 3]], axis=-1)
    return tx1, tz1, tx2, tz2


def _maxlog_bcjr(lsys: np.ndarray, lpar: np.ndarray, lapr: np.ndarray) -> np.ndarray:
    """Max-log-MAP over a terminated RSC trellis.

    Inputs are channel LLRs (positive favours 0) of shape (B, N) including
    the 3 termination steps; ``lapr`` is the a-priori LLR on the K info steps
    padded with zeros. Returns the a-posteriori LLR (B, N).
    """
    nxt, par = _rsc_trellis()
    b, n = lsys.shape
    # gamma for u in {0,1}: 0.5*(sign_u*(lsys+lapr) + sign_p*lpar)
    su = np.array([1.0, -1.0])
    sp = 1.0 - 2.0 * par  # (8, 2)
    gamma = 0.5 * (su[None, None, None, :] * (lsys + lapr)[:, :, None, None]
                   + sp[None, None, :, :] * lpar[:, :, None, None])  # (B, N, 8, 2)
    neg = -1e9
    alpha = np.full((n + 1, b, _NUM_STATES), neg)
    alpha[0, :, 0] = 0.0
    pred_s, pred_u = _predecessors()
    for t in range(n):
        a = np.max(alpha[t][:, pred_s] + gamma[:, t, pred_s, pred_u], axis=2)
        alpha[t + 1] = a - a.max(axis=1, keepdims=True)
    beta = np.full((n + 1, b, _NUM_STATES), neg)
    beta[n, :, 0] = 0.0
    for t in range(n - 1, -1, -1):
        bnext = beta[t + 1][:, nxt]  # (B, 8, 2)
        bt = np.max(gamma[:, t] + bnext, axis=2)
        beta[t] = bt - bt.max(axis=1, keepdims=True)
    # a-posteriori
    metric = alpha[:-1].transpose(1, 0, 2)[..., None] + gamma + beta[1:].transpose(1, 0, 2)[:, :, nxt]
    m0 = metric[..., 0].max(axis=2)
    m1 = metric[..., 1].max(axis=2)
    return m0 - m1


def decode_streams(llr: np.ndarray, iterations: int = 6, scale: float = 0.75) -> np.ndarray:
    """Iterative max-log-MAP decoding. ``llr`` is (..., 3, K+4); returns hard bits (..., K)."""
    if iterations < 1:
        raise ValueError("turbo decoding needs at least one iteration")
    llr = np.asarray(llr, dtype=float)
    batch_shape = llr.shape[:-2]
    n = llr.shape[-1]
    k = n - 4
    x = llr.reshape(-1, 3, n)
    b = x.shape[0]
    pi = qpp_interleaver(k)
    inv = np.argsort(pi)
    tx1, tz1, tx2, tz2 = _split_tails(x)
    sys1 = np.concatenate([x[:, 0, :k], tx1], axis=1)
    par1 = np.concatenate([x[:, 1, :k], tz1], axis=1)
    sys2 = np.concatenate([x[:, 0, :k][:, pi], tx2], axis=1)
    par2 = np.concatenate([x[:, 2, :k], tz2], axis=1)
    ext2 = np.zeros((b, k))
    pad = np.zeros((b, 3))
    for _ in range(iterations):
        apr1 = np.concatenate([ext2, pad], axis=1)
        post1 = _maxlog_bcjr(sys1, par1, apr1)
        ext1 = scale * (post1[:, :k] - sys1[:, :k] - ext2)
        apr2 = np.concatenate([ext1[:, pi], pad], axis=1)
        post2 = _maxlog_bcjr(sys2, par2, apr2)
        ext2_i = scale * (post2[:, :k] - sys2[:, :k] - apr2[:, :k])
        ext2 = ext2_i[:, inv]
    final = post2[:, :k][:, inv]
    return (final < 0).astype(np.uint8).reshape(*batch_shape, k)
