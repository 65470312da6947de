"""Personalized invariant federated learning experiments."""

from ._perinv import (
    DivergenceError,
    FormatError,
    PerinvError,
    ValidationError,
    check_config,
    check_gradients,
    convergence_slope,
    groupdro_update,
    mutual_information,
    parse_idx_images,
    parse_idx_labels,
    random_theorem1_spec,
    report,
    run_experiment,
    theorem1_gap,
    train,
)

__all__ = [
    "DivergenceError",
    "FormatError",
    "PerinvError",
    "ValidationError",
    "check_config",
    "check_gradients",
    "convergence_slope",
    "groupdro_update",
    "mutual_information",
    "parse_idx_images",
    "parse_idx_labels",
    "random_theorem1_spec",
    "report",
    "run_experiment",
    "theorem1_gap",
    "train",
]
