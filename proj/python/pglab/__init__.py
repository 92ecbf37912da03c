"""Posterior geometry lab for small Bayesian neural networks."""

from _pglab import (
    Config,
    ConfigError,
    IoError,
    NumericError,
    ShapeError,
    Store,
    evaluate,
    report,
    sample,
    sample_rho,
    trap_probability,
)

__all__ = [
    "Config",
    "ConfigError",
    "IoError",
    "NumericError",
    "ShapeError",
    "Store",
    "evaluate",
    "report",
    "sample",
    "sample_rho",
    "trap_probability",
]
