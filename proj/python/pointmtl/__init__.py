"""Unsupervised multi-task feature learning on point clouds.

Thin wrapper over the C++ core. The heavy lifting (training loop, autodiff
engine, metrics) lives in :mod:`pointmtl._core`.
"""

from pointmtl._core import (
    CoreError,
    ahc_cluster,
    chamfer,
    default_config,
    desk_config,
    encode,
    extract_shape_features,
    knn,
    linear_probe_accuracy,
    majority_vote_accuracy,
    nmi,
    normalize_unit_sphere,
    synth_generate,
    train,
    verify,
)

__all__ = [
    "CoreError",
    "ahc_cluster",
    "chamfer",
    "default_config",
    "desk_config",
    "encode",
    "extract_shape_features",
    "knn",
    "linear_probe_accuracy",
    "majority_vote_accuracy",
    "nmi",
    "normalize_unit_sphere",
    "synth_generate",
    "train",
    "verify",
]
