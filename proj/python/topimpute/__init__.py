"""Imputation of right-censored wages in panel data."""

from ._topimpute import (
    ConfigError,
    EstimationError,
    FitResult,
    InfeasibleError,
    __version__,
    coefficient_profile,
    cqr,
    fit_tobit,
    generate_cell,
    impute_cell,
    impute_tobit,
    kde,
    run,
    sad,
    silverman_bandwidth,
)

__all__ = [
    "ConfigError",
    "EstimationError",
    "FitResult",
    "InfeasibleError",
    "__version__",
    "coefficient_profile",
    "cqr",
    "fit_tobit",
    "generate_cell",
    "impute_cell",
    "impute_tobit",
    "kde",
    "run",
    "sad",
    "silverman_bandwidth",
]
