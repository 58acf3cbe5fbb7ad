"""Dual-stream fusion classifier: preprocessing, metrics, training, grad-cam."""

from ._core import (
    DataError,
    Model,
    NumericError,
    UsageError,
    auc_ovr,
    bootstrap_accuracy_ci,
    brightness_contrast,
    clahe,
    classification_report,
    cohens_kappa,
    config_hash,
    confusion_matrix,
    default_config_json,
    expected_shapes,
    gradient_check_model,
    hflip,
    kfold_indices,
    make_synthetic,
    nl_means_denoise,
    normalization_stats,
    normalize,
    pr_auc_binary,
    preprocess_image,
    resize_bilinear,
    roc_auc_binary,
    rotate_about_center,
    split_indices,
    stage_seed,
    synthetic_quadrant,
)

__all__ = [
    "DataError",
    "Model",
    "NumericError",
    "UsageError",
    "auc_ovr",
    "bootstrap_accuracy_ci",
    "brightness_contrast",
    "clahe",
    "classification_report",
    "cohens_kappa",
    "config_hash",
    "confusion_matrix",
    "default_config_json",
    "expected_shapes",
    "gradient_check_model",
    "hflip",
    "kfold_indices",
    "make_synthetic",
    "nl_means_denoise",
    "normalization_stats",
    "normalize",
    "pr_auc_binary",
    "preprocess_image",
    "resize_bilinear",
    "roc_auc_binary",
    "rotate_about_center",
    "split_indices",
    "stage_seed",
    "synthetic_quadrant",
]
