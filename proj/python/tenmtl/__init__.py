"""Tensor-based multi-task learning with personalized models."""

from ._core import (
    FitResult,
    FitTrace,
    HyperParams,
    Model,
    ScenarioConfig,
    ShapeError,
    Task,
    TuckerState,
    fit,
    fit_global,
    fit_glm,
    fit_local,
    fit_lr_tucker,
    fold,
    generate,
    hosvd,
    implied_covariance,
    kfold_cv,
    kronecker,
    matricize,
    mode_product,
    objective,
    predict,
    reconstruct_models,
    task_rmse,
    tucker_reconstruct,
)

__all__ = [name for name in dir() if not name.startswith("_")]
