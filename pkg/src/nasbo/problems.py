"""Synthetic bi-objective problems over the architecture grid.

Each problem is a pure function of ``(name, seed, configuration)``; optional
observation noise is keyed by the configuration itself so repeated calls
agree.  Both objectives are minimized.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pareto import hypervolume
from .search_space import PAPER_DEFAULT, SearchSpace, build_paper_space, encode


@dataclass
class SyntheticProblem:
    name: str
    seed: int
    space: SearchSpace
    fn: Callable[[np.ndarray], np.ndarray]
    front_fn: Callable[[int], np.ndarray]
    noise_std: float = 0.0
    objective_names: tuple[str, str] = ("f1", "f2")
    info: dict = field(default_factory=dict)

    def evaluate_unit(self, X) -> np.ndarray:
        """Noise-free objectives for rows of unit coordinates, shape ``(n, 2)``."""
        return self.fn(np.atleast_2d(np.asarray(X, dtype=float)))

    def __call__(self, config) -> dict[str, float]:
        x = encode(self.space, config)
        y = self.evaluate_unit(x)[0]
        if self.noise_std > 0:
            idx = self.space.to_indices(config)
            key = hashlib.sha256(np.asarray(idx, dtype=np.int64).tobytes()).digest()
            rng = np.random.default_rng([self.seed, int.from_bytes(key[:8], "little")])
            y = y + self.noise_std * rng.standard_normal(2)
        return dict(zip(self.objective_names, map(float, y)))

    @property
    def base_values(self) -> np.ndarray:
        """Objective values of the default architecture (the relative baseline)."""
        return self.evaluate_unit(encode(self.space, PAPER_DEFAULT))[0]

    def true_front(self, n: int = 512) -> np.ndarray:
        return self.front_fn(n)


def _front(Y: np.ndarray) -> np.ndarray:
    order = np.lexsort((Y[:, 1], Y[:, 0]))
    Y = Y[order]
    keep = np.minimum.accumulate(Y[:, 1]) == Y[:, 1]
    keep[1:] &= Y[1:, 1] < np.minimum.accumulate(Y[:, 1])[:-1]
    return Y[keep]


def _grid_values(space: SearchSpace, dim: int) -> np.ndarray:
    k = space.grid_sizes[dim]
    return np.arange(k) / (k - 1)


def _sparse_quadratic(space: SearchSpace, rng: np.random.Generator, default: np.ndarray):
    candidates = np.flatnonzero(space.grid_sizes >= 5)
    active = np.sort(rng.choice(candidates, 4, replace=False))
    w = rng.uniform(0.5, 1.5, 4)
    # conflicting optima on the grid, with the default architecture well behind the front
    t = np.linspace(0.0, 1.0, 257)
    for _ in range(1000):
        a = np.array([[rng.choice(_grid_values(space, i)) for i in active] for _ in range(2)])
        D = float(np.sum(w * (a[0] - a[1]) ** 2))
        base = np.sum(w * (default[active] - a) ** 2, axis=1)
        if D <= 0 or np.any(base <= 0):
            continue
        rel = np.stack([t**2 * D / base[0], (1 - t) ** 2 * D / base[1]], axis=1)
        if 0.3 <= hypervolume(rel, (1.0, 1.0)) <= 0.9:
            break

    def fn(X):
        Z = X[:, active]
        return np.stack([np.sum(w * (Z - a[m]) ** 2, axis=1) for m in range(2)], axis=1)

    def front(n):
        # attainable on the grid: enumerate the active coordinates only
        Z = np.array(list(itertools.product(*[_grid_values(space, i) for i in active])))
        Y = np.stack([np.sum(w * (Z - a[m]) ** 2, axis=1) for m in range(2)], axis=1)
        return _front(Y)

    return fn, front, {"active_dims": active.tolist(), "optima": a.tolist(), "weights": w.tolist()}


def _staircase(space: SearchSpace, rng: np.random.Generator, default: np.ndarray, steps: int = 6):
    candidates = np.flatnonzero(space.grid_sizes >= 3)
    dims = rng.choice(candidates, 5, replace=False)
    pos, pen = np.sort(dims[:3]), np.sort(dims[3:])
    c = np.array([rng.choice(_grid_values(space, i)) for i in pen])

    def fn(X):
        s = X[:, pos].mean(axis=1)
        p = np.sum((X[:, pen] - c) ** 2, axis=1)
        level = np.floor(s * steps + 1e-9) / steps
        return np.stack([0.2 + s + p, 1.2 - level**2 + p], axis=1)

    def front(n):
        # only the left edge of each step is non-dominated
        s = np.arange(steps + 1) / steps
        return np.stack([0.2 + s, 1.2 - s**2], axis=1)

    return fn, front, {"position_dims": pos.tolist(), "penalty_dims": pen.tolist(), "penalty_center": c.tolist()}


def _dtlz2(space: SearchSpace, rng: np.random.Generator, default: np.ndarray):
    odd = np.flatnonzero((space.grid_sizes >= 3) & (space.grid_sizes % 2 == 1))
    dist = np.sort(rng.choice(odd, 4, replace=False))
    # the default must sit strictly inside the position range so both base values are positive
    inner = np.flatnonzero((space.grid_sizes >= 3) & (default > 0) & (default < 1))
    pos = int(rng.choice(np.setdiff1d(inner, dist)))

    def fn(X):
        g = np.sum((X[:, dist] - 0.5) ** 2, axis=1)
        th = 0.5 * np.pi * X[:, pos]
        return np.stack([(1 + g) * np.cos(th), (1 + g) * np.sin(th)], axis=1)

    def front(n):
        th = 0.5 * np.pi * _grid_values(space, pos)
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    return fn, front, {"position_dim": pos, "distance_dims": dist.tolist()}


_BUILDERS = {
    "sparse-quadratic": _sparse_quadratic,
    "staircase-tradeoff": _staircase,
    "dtlz2-embedded": _dtlz2,
}

PROBLEMS = tuple(_BUILDERS)


def synthetic_problem(name: str, seed: int = 0, noise_std: float = 0.0, space: SearchSpace | None = None) -> SyntheticProblem:
    if name not in _BUILDERS:
        raise KeyError(f"unknown synthetic problem {name!r}; choose from {', '.join(PROBLEMS)}")
    space = space or build_paper_space()
    rng = np.random.default_rng([int(seed), 17])
    default = encode(space, PAPER_DEFAULT)
    fn, front, info = _BUILDERS[name](space, rng, default)
    return SyntheticProblem(name, int(seed), space, fn, front, float(noise_std), info=info)
