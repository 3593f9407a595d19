"""Hyperbolic generalized category discovery: Poincare-ball geometry, GCD losses and a training harness."""

from ._core import (
    BallConfig,
    ConfigError,
    DataError,
    DivergenceError,
    ball_proj,
    clip_features,
    conformal_factor,
    cosine_lr,
    default_config,
    evaluate,
    exp_map_origin,
    gradcheck,
    hungarian_acc,
    hungarian_solve,
    hyp_linear,
    hyperbolic_distance,
    lift,
    load_features,
    mobius_add,
    read_matrix,
    save_dataset,
    semi_sup_kmeans,
    synth_dataset,
    train,
    write_matrix,
)

__all__ = [
    "BallConfig",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "ball_proj",
    "clip_features",
    "conformal_factor",
    "cosine_lr",
    "default_config",
    "evaluate",
    "exp_map_origin",
    "gradcheck",
    "hungarian_acc",
    "hungarian_solve",
    "hyp_linear",
    "hyperbolic_distance",
    "lift",
    "load_features",
    "mobius_add",
    "read_matrix",
    "save_dataset",
    "semi_sup_kmeans",
    "synth_dataset",
    "train",
    "write_matrix",
]

__version__ = "0.1.0"
