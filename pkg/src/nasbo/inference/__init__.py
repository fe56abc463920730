"""GP hyperparameter inference: SAAS + NUTS ensembles and the MAP baseline."""

from .fit import (
    FitError,
    ObjectiveEnsemble,
    PosteriorEnsemble,
    WarmStart,
    diagnostics_record,
    fit_map,
    fit_models,
    fit_nuts,
    map_estimate,
    standardize,
    unstandardize,
)
from .nuts import NutsResult, NutsSettings, sample_nuts
from .priors import MapPriorSpec, SaasPosterior, SaasPriorSpec, half_cauchy_logpdf, saas_log_prior

__all__ = [
    "FitError",
    "MapPriorSpec",
    "NutsResult",
    "NutsSettings",
    "ObjectiveEnsemble",
    "PosteriorEnsemble",
    "SaasPosterior",
    "SaasPriorSpec",
    "WarmStart",
    "diagnostics_record",
    "fit_map",
    "fit_models",
    "fit_nuts",
    "half_cauchy_logpdf",
    "map_estimate",
    "sample_nuts",
    "saas_log_prior",
    "standardize",
    "unstandardize",
]
