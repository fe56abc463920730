"""Reference numpy implementations of the compiled 2-D Pareto kernels.

Used when the ``_core`` extension is unavailable (or ``NASBO_PURE_PYTHON``
is set); results agree with the compiled versions to rounding.
"""

from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 1 << 22


def _front_2d(P: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Non-dominated, strictly-better-than-ref subset of ``P`` sorted by x."""
    P = P[(P[:, 0] < ref[0]) & (P[:, 1] < ref[1])]
    if P.shape[0] == 0:
        return P
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    prev_min = np.minimum.accumulate(np.concatenate([[np.inf], P[:-1, 1]]))
    return P[P[:, 1] < prev_min]


def staircase_boxes(Y, ref):
    Y = np.asarray(Y, dtype=float)
    ref = np.asarray(ref, dtype=float)
    S, n, _ = Y.shape
    lo = np.empty((S, n + 1, 2))
    hi = np.empty((S, n + 1, 2))
    nbox = np.empty(S, dtype=np.intp)
    for s in range(S):
        F = _front_2d(Y[s], ref)
        k = F.shape[0]
        lo[s, : k + 1, 1] = -np.inf
        lo[s, 0, 0] = -np.inf
        lo[s, 1 : k + 1, 0] = F[:, 0]
        hi[s, :k, 0] = F[:, 0]
        hi[s, k, 0] = ref[0]
        hi[s, 0, 1] = ref[1]
        hi[s, 1 : k + 1, 1] = F[:, 1]
        nbox[s] = k + 1
    return lo, hi, nbox


def hvi_sum(lo, hi, nbox, Yc):
    Yc = np.asarray(Yc, dtype=float)
    S, C, _ = Yc.shape
    B = int(nbox.max())
    lo, hi = lo[:, :B], hi[:, :B]
    # padding past nbox is uninitialized (possibly nan); swap in empty boxes
    live = np.arange(B)[None, :] < nbox[:, None]
    hx = np.where(live, hi[..., 0], -np.inf)[:, None, :]
    hy = np.where(live, hi[..., 1], -np.inf)[:, None, :]
    lx = np.where(live, lo[..., 0], np.inf)[:, None, :]
    ly = np.where(live, lo[..., 1], np.inf)[:, None, :]
    out = np.zeros(C)
    step = max(1, _CHUNK_ELEMS // max(S * B, 1))
    for c0 in range(0, C, step):
        yc = Yc[:, c0 : c0 + step]
        wx = np.clip(hx - np.maximum(lx, yc[..., 0:1]), 0.0, None)
        wy = np.clip(hy - np.maximum(ly, yc[..., 1:2]), 0.0, None)
        out[c0 : c0 + step] = (wx * wy).sum(axis=(0, 2))
    return out


def hypervolume_batch(Y, ref):
    Y = np.asarray(Y, dtype=float)
    ref = np.asarray(ref, dtype=float)
    out = np.zeros(Y.shape[0])
    for s in range(Y.shape[0]):
        F = _front_2d(Y[s], ref)
        if F.shape[0]:
            upper = np.concatenate([[ref[1]], F[:-1, 1]])
            out[s] = np.sum((ref[0] - F[:, 0]) * (upper - F[:, 1]))
    return out
