"""Stepped-channel MHD snapshots, truncated-SVD compression and SHRED ensembles."""

from ._core import (
    Error,
    ShredNet,
    Workflow,
    discarded_energy,
    lagged_windows,
    log_spaced,
    minmax_scale,
    minmax_unscale,
    read_matrix,
    relative_l2_error,
    relative_l2_series,
    select_rank,
    sensor_triplets,
    sha256_file,
    simulate,
    truncated_svd,
    write_matrix,
)

__all__ = [
    "Error",
    "ShredNet",
    "Workflow",
    "discarded_energy",
    "lagged_windows",
    "log_spaced",
    "minmax_scale",
    "minmax_unscale",
    "read_matrix",
    "relative_l2_error",
    "relative_l2_series",
    "select_rank",
    "sensor_triplets",
    "sha256_file",
    "simulate",
    "truncated_svd",
    "write_matrix",
]
