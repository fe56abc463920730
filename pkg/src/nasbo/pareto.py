"""Pareto dominance, hypervolume and box decompositions (all objectives minimized)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import core


class UnsupportedDimensionError(ValueError):
    pass


def _as_points(points, m: int | None = None) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.empty((0, m if m is not None else 2))
    P = np.atleast_2d(P)
    if m is not None and P.shape[1] != m:
        raise ValueError(f"expected {m} objectives, got {P.shape[1]}")
    return P


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("objective vectors differ in length")
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_mask(points) -> np.ndarray:
    """Boolean mask of non-dominated rows (duplicates all kept)."""
    P = _as_points(points)
    n = P.shape[0]
    if n == 0:
        return np.zeros(0, bool)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    return ~dominated


def pareto_front(points) -> np.ndarray:
    """Non-dominated subset, duplicates collapsed, sorted by objective 1 ascending."""
    P = _as_points(points)
    if P.shape[0] == 0:
        return P
    F = np.unique(P[pareto_mask(P)], axis=0)
    return F[np.lexsort(F.T[::-1])]


def _require_2d(m: int):
    if m != 2:
        raise UnsupportedDimensionError(f"exact hypervolume supports 2 objectives, got {m}; use hypervolume_mc")


def hypervolume(front, ref) -> float:
    """Exact 2-D area dominated by ``front`` and bounded by ``ref``.

    Dominated points and points not strictly better than ``ref`` in both
    objectives contribute nothing.
    """
    ref = np.asarray(ref, dtype=float)
    _require_2d(ref.shape[0])
    P = _as_points(front, 2)
    if P.shape[0] == 0:
        return 0.0
    return float(core.hypervolume_batch(np.ascontiguousarray(P[None]), ref)[0])


def hypervolume_mc(points, ref, lower, n_samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo hypervolume for any number of objectives.

    Samples uniformly in the box ``[lower, ref]``; returns the estimate and
    its standard error.
    """
    P = _as_points(points)
    ref = np.asarray(ref, dtype=float)
    lower = np.asarray(lower, dtype=float)
    rng = np.random.default_rng(seed)
    vol = float(np.prod(ref - lower))
    hits = 0
    done = 0
    chunk = max(1, (1 << 21) // max(P.shape[0], 1))
    while done < n_samples:
        k = min(chunk, n_samples - done)
        U = lower + rng.random((k, ref.shape[0])) * (ref - lower)
        if P.shape[0]:
            hits += int(np.any(np.all(P[None, :, :] <= U[:, None, :], axis=2), axis=1).sum())
        done += k
    p = hits / n_samples
    return vol * p, vol * np.sqrt(p * (1 - p) / n_samples)


def box_decomposition(front, ref, lower=None) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint boxes covering the region below ``ref`` not dominated by ``front``.

    For ``k`` front points the result is ``k + 1`` vertical slabs, returned as
    ``(lo, hi)`` arrays of shape ``(k + 1, 2)``.  ``lower`` bounds the region
    from below (``-inf`` by default).
    """
    ref = np.asarray(ref, dtype=float)
    _require_2d(ref.shape[0])
    P = _as_points(front, 2)
    lo, hi, nbox = core.staircase_boxes(np.ascontiguousarray(P[None]), ref)
    lo, hi = lo[0, : nbox[0]].copy(), hi[0, : nbox[0]].copy()
    if lower is not None:
        lower = np.asarray(lower, dtype=float)
        lo = np.maximum(lo, lower)
    return lo, hi


def hvi_from_boxes(lo, hi, point) -> float:
    """Hypervolume improvement of ``point``: its dominated region clipped to each box."""
    y = np.asarray(point, dtype=float)
    w = np.clip(hi - np.maximum(lo, y), 0.0, None)
    return float(np.prod(w, axis=1).sum())


def hv_trace(trials, ref) -> np.ndarray:
    """Hypervolume of the first ``t + 1`` trials, for every ``t``."""
    ref = np.asarray(ref, dtype=float)
    _require_2d(ref.shape[0])
    P = _as_points(trials, 2)
    out = np.zeros(P.shape[0])
    front = np.empty((0, 2))
    for t in range(P.shape[0]):
        y = P[t]
        if np.all(y < ref) and not np.any(np.all(front <= y, axis=1)):
            front = np.vstack([front[~np.all(y <= front, axis=1)], y])
            out[t] = hypervolume(front, ref)
        elif t:
            out[t] = out[t - 1]
    return out


@dataclass(frozen=True)
class ParetoState:
    """Reference point, current front and the boxes of its non-dominated region."""

    ref_point: np.ndarray
    front: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_points(cls, points, ref, lower=None) -> "ParetoState":
        ref = np.asarray(ref, dtype=float)
        P = _as_points(points, ref.shape[0])
        F = pareto_front(P[np.all(P < ref, axis=1)])
        lo, hi = box_decomposition(F, ref, lower)
        return cls(ref, F, lo, hi)

    @property
    def hypervolume(self) -> float:
        return hypervolume(self.front, self.ref_point)

    def hvi(self, point) -> float:
        return hvi_from_boxes(self.lo, self.hi, point)
