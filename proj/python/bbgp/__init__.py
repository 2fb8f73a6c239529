"""Gaussian process hyperparameter fitting with bias-bounded Krylov estimates."""

from ._core import (
    BBGPConfig,
    Hyperparameters,
    estimate_lml,
    exact_lml,
    exact_lml_grad,
    fit,
    fit_exact,
    kernel_matrix,
    predict_mean,
    rademacher_probes,
    synth_gp,
    validate_bounds,
)

__all__ = [
    "BBGPConfig",
    "Hyperparameters",
    "estimate_lml",
    "exact_lml",
    "exact_lml_grad",
    "fit",
    "fit_exact",
    "kernel_matrix",
    "predict_mean",
    "rademacher_probes",
    "synth_gp",
    "validate_bounds",
]
