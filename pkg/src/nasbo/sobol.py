"""Scrambled Sobol points and initial designs."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

from .search_space import SearchSpace, decode


def sobol_points(n: int, d: int, seed: int | None = 0, scramble: bool = True) -> np.ndarray:
    """First ``n`` points of a ``d``-dimensional Sobol sequence in ``[0, 1)^d``.

    Scrambling (linear matrix scramble + digital shift) is keyed by ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    engine = qmc.Sobol(d, scramble=scramble, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        return engine.random(n)


def sobol_init(space: SearchSpace, n: int, seed: int = 0, scramble: bool = True) -> list[dict]:
    return [decode(space, x) for x in sobol_points(n, space.dim, seed, scramble)]
