"""Mixed-type tabular VAE with native missing-data support.

Fits a variational autoencoder whose decoder emits one likelihood per column
kind (Normal, log-Normal, Poisson, multinomial logit, cumulative-logit) under
a Gaussian-mixture prior, trains on observed cells only, imputes missing
cells by MAP decoding or posterior sampling, and benchmarks against a
mean/mode baseline under MCAR masking.
"""

from .benchmark import (
    MetricsReport,
    accuracy_error,
    displacement_error,
    generate_mcar_mask,
    mean_mode_impute,
    nrmse,
    run_benchmark,
    score_imputation,
    separable_table,
    synthetic_table,
)
from .imputation import ImputationResult, impute_map, impute_sample, predict_target
from .tabular import (
    ColumnSpec,
    HeterogeneousTable,
    MissingMask,
    Schema,
    encode_inputs,
    fit_normalization,
    load_dataset,
)
from .training import ModelState, TrainConfig, elbo_batch, load_model, save_model, train

__all__ = [
    "ColumnSpec",
    "Schema",
    "HeterogeneousTable",
    "MissingMask",
    "MetricsReport",
    "ModelState",
    "TrainConfig",
    "ImputationResult",
    "accuracy_error",
    "displacement_error",
    "elbo_batch",
    "encode_inputs",
    "fit_normalization",
    "generate_mcar_mask",
    "impute_map",
    "impute_sample",
    "load_dataset",
    "load_model",
    "mean_mode_impute",
    "nrmse",
    "predict_target",
    "run_benchmark",
    "save_model",
    "score_imputation",
    "separable_table",
    "synthetic_table",
    "train",
]

__version__ = "0.1.0"
