"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerical code: kernels are written
element-wise, posteriors use dense solves and hypervolumes use a plain sweep.
"""

import math

import numpy as np


def matern52(A, B, lengthscales, signal_var):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    r = np.sqrt(np.sum(((A[:, None, :] - B[None, :, :]) / np.asarray(lengthscales)) ** 2, -1))
    return signal_var * (1 + math.sqrt(5) * r + 5 * r**2 / 3) * np.exp(-math.sqrt(5) * r)


def dense_posterior(X, y, Xq, mean_const, signal_var, noise_var, lengthscales):
    """Latent posterior mean and covariance at ``Xq`` from explicit solves."""
    K = matern52(X, X, lengthscales, signal_var) + noise_var * np.eye(len(X))
    Kq = matern52(Xq, X, lengthscales, signal_var)
    mean = mean_const + Kq @ np.linalg.solve(K, np.asarray(y) - mean_const)
    cov = matern52(Xq, Xq, lengthscales, signal_var) - Kq @ np.linalg.solve(K, Kq.T)
    return mean, cov


def hv2d(points, ref):
    """Area dominated by ``points`` (minimized) inside ``ref``; plain-Python sweep."""
    pts = sorted((float(a), float(b)) for a, b in np.asarray(points).reshape(-1, 2) if a < ref[0] and b < ref[1])
    area, best = 0.0, float(ref[1])
    for x, y in pts:
        if y < best:
            area += (ref[0] - x) * (best - y)
            best = y
    return area


def hv2d_rows(Y, ref):
    """Vectorized sweep: hypervolume of each ``Y[s]`` for ``Y`` of shape (S, n, 2)."""
    ref = np.asarray(ref, dtype=float)
    Y = np.where(np.all(Y < ref, -1, keepdims=True), Y, ref)
    order = np.argsort(Y[..., 0], axis=1, kind="stable")
    Ys = np.take_along_axis(Y, order[..., None], 1)
    best = np.minimum.accumulate(Ys[..., 1], axis=1)
    prev = np.concatenate([np.full((Y.shape[0], 1), ref[1]), best[:, :-1]], 1)
    return np.sum((ref[0] - Ys[..., 0]) * np.maximum(prev - best, 0), 1)


def hv2d_mc(front, ref, lower, n_samples, seed=0, chunk=10**6):
    """Hit-or-miss estimate and standard error from uniform draws in the box [lower, ref]."""
    F = np.asarray(front, dtype=float).reshape(-1, 2)
    F = F[np.argsort(F[:, 0], kind="stable")]
    prefix_min = np.minimum.accumulate(F[:, 1]) if len(F) else F[:, 1]
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(lower, float), np.asarray(ref, float)
    hits = 0
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        u = lo + (hi - lo) * rng.random((m, 2))
        k = np.searchsorted(F[:, 0], u[:, 0], side="right")
        covered = (k > 0) & (prefix_min[np.maximum(k - 1, 0)] <= u[:, 1])
        hits += int(covered.sum())
    vol = float(np.prod(hi - lo))
    p = hits / n_samples
    return vol * p, vol * math.sqrt(p * (1 - p) / n_samples)


def hvi_brute_force(posteriors, ref, n_samples, seed=0):
    """MC value of the expected HV improvement of the last input.

    ``posteriors`` holds one (mean, covariance) per objective over the
    observed inputs followed by the candidate; outcomes are minimized.
    """
    rng = np.random.default_rng(seed)
    F = np.stack([rng.multivariate_normal(m, C, size=n_samples, method="eigh") for m, C in posteriors], -1)
    d = hv2d_rows(F, ref) - hv2d_rows(F[:, :-1], ref)
    return float(d.mean()), float(d.std() / math.sqrt(n_samples))
