"""Fitting GP hyperparameters: MAP point estimates and SAAS + NUTS ensembles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from ..gp import GpDataset, GpHyperParams, posterior
from .nuts import NutsSettings, sample_nuts
from .priors import MapObjective, MapPriorSpec, SaasPosterior, SaasPriorSpec, _scaled_mean

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def standardize(y) -> tuple[np.ndarray, float, float]:
    """Zero mean, unit (population) std; constant vectors map to zeros with std 1."""
    y = np.asarray(y, dtype=float).reshape(-1)
    mu = float(y.mean())
    sd = float(y.std()) if y.shape[0] > 1 else 0.0
    if not sd > 1e-12 * max(1.0, abs(mu)):
        sd = 1.0
    return (y - mu) / sd, mu, sd


def unstandardize(z, mean: float, std: float) -> np.ndarray:
    return np.asarray(z) * std + mean


@dataclass(frozen=True)
class ObjectiveEnsemble:
    """Hyperparameter draws for one objective, on standardized targets."""

    samples: tuple[GpHyperParams, ...]
    y_mean: float = 0.0
    y_std: float = 1.0
    method: str = "map"
    shrinkage: tuple[float, ...] | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)
    warm_start: "WarmStart | None" = field(default=None, compare=False, repr=False)

    def __len__(self):
        return len(self.samples)

    def predict(self, data: GpDataset, Xq, include_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Mixture mean and variance (raw target scale) over the draws.

        ``data`` holds raw targets; they are standardized with this
        ensemble's stored transform.  The variance is that of the latent
        function unless ``include_noise``.
        """
        z = GpDataset(data.inputs, (data.targets - self.y_mean) / self.y_std)
        means, variances = [], []
        for p in self.samples:
            pd = posterior(p, z, Xq, full_cov=False, include_noise=include_noise)
            means.append(pd.mean)
            variances.append(pd.variance)
        means, variances = np.asarray(means), np.asarray(variances)
        mix_mean = means.mean(0)
        mix_var = variances.mean(0) + means.var(0)
        return unstandardize(mix_mean, self.y_mean, self.y_std), mix_var * self.y_std**2

    def median_lengthscales(self) -> np.ndarray:
        return np.median(np.array([p.lengthscales for p in self.samples]), axis=0)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "samples": [p.to_dict() for p in self.samples],
            "shrinkage": list(self.shrinkage) if self.shrinkage is not None else None,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class PosteriorEnsemble:
    per_objective: tuple[ObjectiveEnsemble, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_objective", tuple(self.per_objective))
        if not self.per_objective or any(len(e) == 0 for e in self.per_objective):
            raise ValueError("ensemble must be non-empty")
        if len({len(e) for e in self.per_objective}) != 1:
            raise ValueError("all objectives need the same number of hyperparameter draws")

    @property
    def n_objectives(self) -> int:
        return len(self.per_objective)

    @property
    def size(self) -> int:
        return len(self.per_objective[0])

    def to_dict(self) -> dict:
        return {"per_objective": [e.to_dict() for e in self.per_objective]}


# -- MAP ------------------------------------------------------------------------

_MAP_BOUNDS_LOG_S2 = (math.log(1e-4), math.log(1e3))
_MAP_BOUNDS_LOG_N2 = (math.log(1e-6), math.log(10.0))
_MAP_BOUNDS_LOG_K = (math.log(1e-4), math.log(1e3))


def _map_starts(d: int, restarts: int, rng: np.random.Generator) -> list[np.ndarray]:
    starts = [np.concatenate([[0.0, 0.0, math.log(0.1)], np.zeros(d)])]
    for _ in range(restarts - 1):
        starts.append(
            np.concatenate(
                [
                    [rng.uniform(-0.5, 0.5), rng.uniform(-1.0, 1.5), rng.uniform(math.log(1e-3), math.log(0.5))],
                    rng.uniform(math.log(0.2), math.log(5.0), d),
                ]
            )
        )
    return starts


def map_estimate(
    data: GpDataset,
    restarts: int = 10,
    seed: int = 0,
    prior: MapPriorSpec = MapPriorSpec(),
    x0: np.ndarray | None = None,
) -> tuple[GpHyperParams, float, list[dict]]:
    """Best of ``restarts`` L-BFGS-B runs on standardized targets.

    ``x0`` (in ``[mean, log s2, log n2, log(1/l)]``) replaces the first,
    deterministic start.  Returns the parameters, their log posterior and
    per-restart records.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    obj = MapObjective(data, prior)
    d = data.dim
    bounds = [(-1.0, 1.0), _MAP_BOUNDS_LOG_S2, _MAP_BOUNDS_LOG_N2] + [_MAP_BOUNDS_LOG_K] * d
    rng = np.random.default_rng(seed)
    best, best_val, records = None, np.inf, []
    starts = _map_starts(d, restarts, rng)
    if x0 is not None:
        lows, highs = np.array(bounds).T
        starts[0] = np.clip(np.asarray(x0, dtype=float), lows, highs)
    for start in starts:
        try:
            res = minimize(obj, start, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 500})
        except (np.linalg.LinAlgError, ValueError) as exc:
            records.append({"ok": False, "error": str(exc)})
            continue
        ok = bool(np.isfinite(res.fun) and res.fun < 1e24)
        records.append({"ok": ok, "fun": float(res.fun), "nit": int(res.nit), "message": str(res.message)})
        if ok and res.fun < best_val:
            best, best_val = res.x, float(res.fun)
    if best is None:
        raise FitError("all MAP restarts failed", {"restarts": records})
    return MapObjective.to_params(best), -best_val, records


def fit_map(
    data: GpDataset,
    restarts: int = 10,
    seed: int = 0,
    prior: MapPriorSpec = MapPriorSpec(),
    x0: np.ndarray | None = None,
) -> PosteriorEnsemble:
    """Single-draw ensemble from a multi-start MAP fit (targets standardized first)."""
    z, mu, sd = standardize(data.targets)
    params, lp, records = map_estimate(GpDataset(data.inputs, z), restarts, seed, prior, x0)
    diag = {"log_posterior": lp, "restarts": records, "median_lengthscales": params.lengthscales.tolist()}
    return PosteriorEnsemble((ObjectiveEnsemble((params,), mu, sd, "map", None, diag),))


# -- SAAS / NUTS ------------------------------------------------------------------


@dataclass(frozen=True)
class WarmStart:
    """Sampler state carried from one fit to a closely related one."""

    point: np.ndarray
    inv_mass: np.ndarray
    step_size: float


def fit_nuts(
    data: GpDataset,
    prior: SaasPriorSpec = SaasPriorSpec(),
    settings: NutsSettings = NutsSettings(),
    warm_start: WarmStart | None = None,
) -> PosteriorEnsemble:
    """Fully Bayesian SAAS fit; keeps ``samples // thinning`` draws.

    ``warm_start`` reuses a previous fit's metric and step size and starts
    from its median draw; the chain itself is rerun on ``data``.
    """
    if data.n < 2:
        raise ValueError("need at least two observations")
    z, mu, sd = standardize(data.targets)
    target = SaasPosterior(GpDataset(data.inputs, z), prior)
    if warm_start is None:
        res = sample_nuts(target, target.initial_point(), settings)
    else:
        res = sample_nuts(
            target, warm_start.point, settings, inv_mass=warm_start.inv_mass, step_size=warm_start.step_size
        )
    draws, taus = [], []
    for u in res.samples:
        mean, _ = _scaled_mean(u[0], prior.mean_low, prior.mean_high)
        draws.append(GpHyperParams(mean, math.exp(u[1]), prior.noise_floor + math.exp(u[2]), np.exp(-u[4:])))
        taus.append(math.exp(u[3]))
    diag = res.diagnostics()
    diag["median_lengthscales"] = np.median([p.lengthscales for p in draws], axis=0).tolist()
    diag["median_shrinkage"] = float(np.median(taus))
    diag["seed"] = settings.seed
    if res.divergence_rate > 0.25:
        diag["warning"] = "divergence rate above 25%"
    ws = WarmStart(np.median(res.samples, axis=0), res.inv_mass, res.step_size)
    return PosteriorEnsemble((ObjectiveEnsemble(tuple(draws), mu, sd, "saas", tuple(taus), diag, ws),))


def objective_seed(seed: int, k: int) -> int:
    """Independent per-objective seed derived from a master seed."""
    return int(np.random.SeedSequence([int(seed), 1000 + k]).generate_state(1)[0])


def fit_models(
    X,
    Y,
    method: str = "saas",
    settings: NutsSettings = NutsSettings(),
    prior: SaasPriorSpec = SaasPriorSpec(),
    restarts: int = 10,
) -> PosteriorEnsemble:
    """Fit one independent GP per column of ``Y``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    members = []
    for k in range(Y.shape[1]):
        data = GpDataset(X, Y[:, k])
        seed = objective_seed(settings.seed, k)
        if method == "saas":
            ens = fit_nuts(data, prior, settings.with_seed(seed))
        elif method == "map":
            ens = fit_map(data, restarts, seed)
        else:
            raise ValueError(f"unknown fitting method {method!r}")
        members.append(ens.per_objective[0])
    return PosteriorEnsemble(members)


def diagnostics_record(ensemble: PosteriorEnsemble, names: Sequence[str] | None = None) -> dict:
    """JSON-ready summary of each objective's fit."""
    names = names or [f"objective_{k}" for k in range(ensemble.n_objectives)]
    return {name: {"method": e.method, "size": len(e), **e.diagnostics} for name, e in zip(names, ensemble.per_objective)}
