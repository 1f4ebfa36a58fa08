"""Amortized in-context Bayesian posterior estimation.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from ampe._core import (  # noqa: F401
    Dataset,
    DivergenceError,
    ModelSpec,
    ValidationError,
    analytic_posterior,
    baseline,
    evaluate,
    ingest_csv,
    langevin_sample,
    log_evidence,
    log_joint,
    log_likelihood,
    log_prior,
    map_optimize,
    predict_mode,
    preset_config,
    preset_names,
    sample_dataset,
    sample_theta,
    symmetric_kl_gaussian,
    theta_layout,
    train,
    w2_squared,
)

__all__ = [
    "Dataset",
    "DivergenceError",
    "ModelSpec",
    "ValidationError",
    "analytic_posterior",
    "baseline",
    "evaluate",
    "ingest_csv",
    "langevin_sample",
    "log_evidence",
    "log_joint",
    "log_likelihood",
    "log_prior",
    "map_optimize",
    "predict_mode",
    "preset_config",
    "preset_names",
    "sample_dataset",
    "sample_theta",
    "symmetric_kl_gaussian",
    "theta_layout",
    "train",
    "w2_squared",
]
