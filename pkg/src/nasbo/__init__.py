"""Multi-objective Bayesian optimization over mixed-integer architecture spaces."""

__version__ = "0.1.0"
