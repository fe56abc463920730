"""Constant-mean Gaussian process with an ARD Matern-5/2 kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.spatial.distance import cdist

SQRT5 = np.sqrt(5.0)
LOG_2PI = np.log(2.0 * np.pi)

JITTER_START = 1e-8
JITTER_MAX = 1e-2


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GpHyperParams:
    mean_const: float
    signal_var: float
    noise_var: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not (self.signal_var > 0 and self.noise_var > 0 and np.all(ls > 0)):
            raise ValueError("signal_var, noise_var and lengthscales must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def to_vector(self) -> np.ndarray:
        """``(mean, log signal_var, log noise_var, log lengthscales...)``."""
        return np.concatenate(
            [[self.mean_const, np.log(self.signal_var), np.log(self.noise_var)], np.log(self.lengthscales)]
        )

    @classmethod
    def from_vector(cls, v) -> "GpHyperParams":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(np.exp(v[1])), float(np.exp(v[2])), np.exp(v[3:]))

    def to_dict(self) -> dict:
        return {
            "mean_const": self.mean_const,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "lengthscales": self.lengthscales.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GpHyperParams":
        return cls(d["mean_const"], d["signal_var"], d["noise_var"], np.asarray(d["lengthscales"]))


@dataclass(frozen=True)
class GpDataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0] or X.shape[0] < 1:
            raise ValueError(f"inputs {X.shape} and targets {y.shape} disagree")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def drop(self, i: int) -> "GpDataset":
        keep = np.arange(self.n) != i
        return GpDataset(self.inputs[keep], self.targets[keep])


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.covariance), 0.0, None)


def matern52(r):
    sr = SQRT5 * r
    return (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def _check(params: GpHyperParams, *mats):
    for X in mats:
        if X.shape[-1] != params.dim:
            raise ValueError(f"input dimension {X.shape[-1]} != {params.dim} lengthscales")


def scaled_distance(X, X2, lengthscales) -> np.ndarray:
    A = np.asarray(X, dtype=float) / lengthscales
    B = np.asarray(X2, dtype=float) / lengthscales
    return cdist(A, B, "euclidean")


def kernel_matrix(params: GpHyperParams, X, X2=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    _check(params, X, X2)
    return params.signal_var * matern52(scaled_distance(X, X2, params.lengthscales))


def robust_cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter by 10x on failure.

    Returns the factor and the jitter that was added.
    """
    L, info = lapack.dpotrf(K, lower=1, clean=1)
    if info == 0:
        return L, 0.0
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        raise NotPositiveDefiniteError("kernel matrix has a non-positive or non-finite diagonal")
    jitter = JITTER_START * scale
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        L, info = lapack.dpotrf(K + jitter * eye, lower=1, clean=1)
        if info == 0:
            return L, jitter
        jitter *= 10.0
    raise NotPositiveDefiniteError(f"Cholesky failed with jitter up to {JITTER_MAX:g} x mean diagonal")


class MarginalLikelihood:
    """Log marginal likelihood of one dataset and its gradient.

    This is the inner loop of both MAP fitting and NUTS.  The lengthscale
    gradient uses ``sum_ij M_ij (x_ik - x_jk)^2 = 2 (rowsum(M) . x_k^2 - x_k . M x_k)``
    for symmetric ``M``, so no ``n x n x d`` tensor is formed.
    """

    def __init__(self, data: GpDataset):
        self.data = data
        self._X = np.ascontiguousarray(data.inputs)
        self._X2 = self._X**2

    def value_and_grad(self, mean_const, signal_var, noise_var, lengthscales):
        """Returns ``(lml, grad)``, gradient ordered as in ``GpHyperParams.to_vector``."""
        X = self._X
        n = X.shape[0]
        inv_ls2 = 1.0 / np.square(lengthscales)
        Z = X * np.sqrt(inv_ls2)
        zz = np.einsum("ik,ik->i", Z, Z)
        r2 = zz[:, None] + zz[None, :] - 2.0 * (Z @ Z.T)
        np.clip(r2, 0.0, None, out=r2)
        r2.flat[:: n + 1] = 0.0
        sr = np.sqrt(5.0 * r2)
        e = np.exp(-sr)
        Kf = signal_var * (1.0 + sr + sr * sr / 3.0) * e
        K = Kf.copy()
        K.flat[:: n + 1] += noise_var
        L, _ = robust_cholesky(K)
        resid = self.data.targets - mean_const
        alpha, info = lapack.dpotrs(L, resid, lower=1)
        lml = -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI

        Kinv, info = lapack.dpotri(L, lower=1)
        if info:
            raise NotPositiveDefiniteError("dpotri failed")
        Kinv = Kinv + Kinv.T
        Kinv.flat[:: n + 1] *= 0.5
        W = np.outer(alpha, alpha)
        W -= Kinv
        grad = np.empty(3 + lengthscales.shape[0])
        grad[0] = alpha.sum()
        grad[1] = 0.5 * np.vdot(W, Kf)
        grad[2] = 0.5 * noise_var * np.trace(W)
        M = W * ((signal_var * 5.0 / 3.0) * (1.0 + sr) * e)
        grad[3:] = (M.sum(1) @ self._X2 - np.einsum("ik,ik->k", X, M @ X)) * inv_ls2
        return float(lml), grad

    def __call__(self, params: GpHyperParams):
        return self.value_and_grad(params.mean_const, params.signal_var, params.noise_var, params.lengthscales)


def log_marginal_likelihood(params: GpHyperParams, data: GpDataset) -> float:
    _check(params, data.inputs)
    K = kernel_matrix(params, data.inputs) + params.noise_var * np.eye(data.n)
    L, _ = robust_cholesky(K)
    resid = data.targets - params.mean_const
    alpha = cho_solve((L, True), resid)
    return float(-0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * data.n * LOG_2PI)


def log_marginal_likelihood_grad(params: GpHyperParams, data: GpDataset) -> np.ndarray:
    _check(params, data.inputs)
    return MarginalLikelihood(data)(params)[1]


def posterior(
    params: GpHyperParams, data: GpDataset, Xq, full_cov: bool = True, include_noise: bool = False
) -> PredictiveDistribution:
    """Latent-function predictive at ``Xq`` (observation noise only if asked)."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    _check(params, data.inputs, Xq)
    K = kernel_matrix(params, data.inputs) + params.noise_var * np.eye(data.n)
    L, _ = robust_cholesky(K)
    Kqn = kernel_matrix(params, Xq, data.inputs)
    alpha = cho_solve((L, True), data.targets - params.mean_const)
    mean = params.mean_const + Kqn @ alpha
    V = solve_triangular(L, Kqn.T, lower=True)
    if full_cov:
        cov = kernel_matrix(params, Xq) - V.T @ V
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.diag(np.clip(params.signal_var - np.sum(V * V, axis=0), 0.0, None))
    if include_noise:
        cov = cov + params.noise_var * np.eye(cov.shape[0])
    return PredictiveDistribution(mean, cov)
