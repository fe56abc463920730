"""Hyperparameter priors for the SAAS model and the MAP baseline.

Unconstrained coordinates for the SAAS posterior::

    u = [logit-scaled mean, log signal_var, log(noise_var - floor), log tau, log(1/l_1), ..., log(1/l_d)]

with ``mean = tanh(u[0] / 2)`` (a logit rescaled to ``[-1, 1]``).  The noise
floor keeps noiseless data from driving the chain into ``noise_var -> 0``.  All log
densities below include the change-of-variables terms for this map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..gp import GpDataset, GpHyperParams, MarginalLikelihood

LOG_2_OVER_PI = math.log(2.0 / math.pi)


@dataclass(frozen=True)
class SaasPriorSpec:
    shrinkage_scale: float = 0.1
    noise_shape: float = 0.9
    noise_rate: float = 10.0
    signal_shape: float = 2.0
    signal_rate: float = 0.15
    mean_low: float = -1.0
    mean_high: float = 1.0
    noise_floor: float = 1e-6
    # "rate": Gamma(shape, rate); "scale": second number is a scale.
    gamma_parameterization: str = "rate"

    def __post_init__(self):
        vals = (self.shrinkage_scale, self.noise_shape, self.noise_rate, self.signal_shape, self.signal_rate)
        if min(vals) <= 0 or self.mean_low >= self.mean_high or self.noise_floor < 0:
            raise ValueError("prior scales, shapes and rates must be positive")
        if self.gamma_parameterization not in ("rate", "scale"):
            raise ValueError("gamma_parameterization must be 'rate' or 'scale'")

    def rate(self, second: float) -> float:
        return second if self.gamma_parameterization == "rate" else 1.0 / second

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class MapPriorSpec:
    """Weak priors for the MAP baseline: no global shrinkage."""

    inv_lengthscale_scale: float = 1.0
    noise_shape: float = 0.9
    noise_rate: float = 10.0
    signal_shape: float = 2.0
    signal_rate: float = 0.15


def half_cauchy_logpdf(x, scale):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, LOG_2_OVER_PI - np.log(scale) - np.log1p((x / scale) ** 2), -np.inf)


def gamma_logpdf(x, shape, rate):
    return shape * math.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


@dataclass(frozen=True)
class SaasPoint:
    """Constrained view of one unconstrained SAAS coordinate vector."""

    params: GpHyperParams
    tau: float

    @classmethod
    def from_unconstrained(cls, u, noise_floor: float = SaasPriorSpec.noise_floor) -> "SaasPoint":
        u = np.asarray(u, dtype=float)
        mean = math.tanh(0.5 * u[0])
        n2 = noise_floor + math.exp(u[2])
        return cls(GpHyperParams(mean, math.exp(u[1]), n2, np.exp(-u[4:])), math.exp(u[3]))

    def to_unconstrained(self, noise_floor: float = SaasPriorSpec.noise_floor) -> np.ndarray:
        m = self.params.mean_const
        return np.concatenate(
            [
                [2.0 * math.atanh(m), math.log(self.params.signal_var), math.log(self.params.noise_var - noise_floor),
                 math.log(self.tau)],
                -np.log(self.params.lengthscales),
            ]
        )


def _scaled_mean(u0: float, lo: float, hi: float) -> tuple[float, float]:
    """Mean on ``[lo, hi]`` and its derivative w.r.t. the logit coordinate."""
    s = 1.0 / (1.0 + math.exp(-u0)) if u0 > -700 else 0.0
    return lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s)


def saas_log_prior(u, prior: SaasPriorSpec = SaasPriorSpec(), jacobian: bool = True):
    """Prior log density (and gradient in ``u``) of the SAAS hierarchy.

    With ``jacobian=False`` the value is the density of the constrained
    parameters evaluated at the image of ``u`` (gradient then omitted).
    """
    u = np.asarray(u, dtype=float)
    lo, hi = prior.mean_low, prior.mean_high
    mean, dmean = _scaled_mean(u[0], lo, hi)
    s2, e2, tau = math.exp(u[1]), math.exp(u[2]), math.exp(u[3])
    n2 = prior.noise_floor + e2
    kappa = np.exp(u[4:])
    ts = prior.shrinkage_scale
    a_n, b_n = prior.noise_shape, prior.rate(prior.noise_rate)
    a_s, b_s = prior.signal_shape, prior.rate(prior.signal_rate)

    lp = (
        float(half_cauchy_logpdf(tau, ts))
        + float(np.sum(half_cauchy_logpdf(kappa, tau)))
        + float(gamma_logpdf(n2, a_n, b_n))
        + float(gamma_logpdf(s2, a_s, b_s))
        + (-math.log(hi - lo) if lo <= mean <= hi else -np.inf)
    )
    if not jacobian:
        return lp
    lp += u[1] + u[2] + u[3] + float(np.sum(u[4:])) + math.log(max(dmean, 1e-300))

    g = np.empty_like(u)
    s = (mean - lo) / (hi - lo)
    g[0] = 1.0 - 2.0 * s
    g[1] = a_s - b_s * s2
    g[2] = ((a_n - 1.0) / n2 - b_n) * e2 + 1.0
    k2, t2 = kappa * kappa, tau * tau
    g[3] = 1.0 - 2.0 * t2 / (ts * ts + t2) + float(np.sum(-1.0 + 2.0 * k2 / (t2 + k2)))
    g[4:] = 1.0 - 2.0 * k2 / (t2 + k2)
    return lp, g


class SaasPosterior:
    """Unnormalized log posterior of the SAAS GP in unconstrained coordinates."""

    def __init__(self, data: GpDataset, prior: SaasPriorSpec = SaasPriorSpec(), likelihood: bool = True):
        self.data = data
        self.prior = prior
        self.likelihood = likelihood
        self._lml = MarginalLikelihood(data)

    @property
    def dim(self) -> int:
        return 4 + self.data.dim

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        lp, g = saas_log_prior(u, self.prior)
        if not self.likelihood:
            return lp, g
        mean, dmean = _scaled_mean(u[0], self.prior.mean_low, self.prior.mean_high)
        e2 = math.exp(u[2])
        n2 = self.prior.noise_floor + e2
        ll, gl = self._lml.value_and_grad(mean, math.exp(u[1]), n2, np.exp(-u[4:]))
        g = g.copy()
        g[0] += gl[0] * dmean
        g[1] += gl[1]
        g[2] += gl[2] * e2 / n2
        g[4:] -= gl[3:]
        return lp + ll, g

    def initial_point(self) -> np.ndarray:
        """Prior medians for the variances and the shrinkage hierarchy."""
        p = self.prior
        d = self.data.dim
        return np.concatenate(
            [[0.0, math.log(p.signal_shape / p.rate(p.signal_rate)), math.log(0.05), math.log(p.shrinkage_scale)],
             np.full(d, math.log(p.shrinkage_scale))]
        )


class MapObjective:
    """Negative log posterior for the MAP baseline in ``[mean, log s2, log n2, log(1/l)]``.

    No Jacobian terms: the mode is taken in the constrained parameters.
    """

    def __init__(self, data: GpDataset, prior: MapPriorSpec = MapPriorSpec()):
        self.data = data
        self.prior = prior
        self._lml = MarginalLikelihood(data)

    def log_posterior(self, v):
        v = np.asarray(v, dtype=float)
        p = self.prior
        s2, n2 = math.exp(v[1]), math.exp(v[2])
        kappa = np.exp(v[3:])
        ll, gl = self._lml.value_and_grad(v[0], s2, n2, 1.0 / kappa)
        lp = (
            float(gamma_logpdf(s2, p.signal_shape, p.signal_rate))
            + float(gamma_logpdf(n2, p.noise_shape, p.noise_rate))
            + float(np.sum(half_cauchy_logpdf(kappa, p.inv_lengthscale_scale)))
        )
        g = np.empty_like(v)
        g[0] = gl[0]
        g[1] = gl[1] + (p.signal_shape - 1.0) - p.signal_rate * s2
        g[2] = gl[2] + (p.noise_shape - 1.0) - p.noise_rate * n2
        k2 = kappa * kappa
        c2 = p.inv_lengthscale_scale**2
        g[3:] = -gl[3:] - 2.0 * k2 / (c2 + k2)
        return ll + lp, g

    def __call__(self, v):
        try:
            lp, g = self.log_posterior(v)
        except np.linalg.LinAlgError:
            return 1e25, np.zeros_like(v)
        if not np.isfinite(lp):
            return 1e25, np.zeros_like(v)
        return -lp, -g

    @staticmethod
    def to_params(v) -> GpHyperParams:
        return GpHyperParams(float(v[0]), math.exp(v[1]), math.exp(v[2]), np.exp(-np.asarray(v[3:])))
