"""Quantile-calibrated margin regularization for learning under label noise.

The core idea: per-batch confidence margins between the observed label and
its strongest competitor are thresholded at a conformal quantile; samples
below the threshold (likely mislabeled) are softly suppressed while the
retained margins are widened. A binary two-threshold variant controls the
class-conditional tails of the positive-class confidence instead.
"""

from .core import (
    BinaryCmrmConfig,
    BinaryThresholds,
    CmrmConfig,
    QuantileThreshold,
    batch_margins,
    batch_quantile,
    binary_cmrm_loss,
    binary_thresholds,
    cmrm_loss,
    margin,
    positive_confidence,
    soft_indicator,
)
from .data import NoisyDataset, SynthSpec, generate_gaussian_blobs, load_csv, split, standardize
from .estimator import CmrmClassifier
from .losses import BaseLossSpec, loss_and_logit_grad
from .nets import ModelParams, backward, forward, init_params, sigmoid, softmax
from .noise import NoiseSpec, inject
from .trainer import EpochRecord, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BaseLossSpec",
    "BinaryCmrmConfig",
    "BinaryThresholds",
    "CmrmClassifier",
    "CmrmConfig",
    "EpochRecord",
    "ModelParams",
    "NoiseSpec",
    "NoisyDataset",
    "QuantileThreshold",
    "SynthSpec",
    "TrainConfig",
    "backward",
    "batch_margins",
    "batch_quantile",
    "binary_cmrm_loss",
    "binary_thresholds",
    "cmrm_loss",
    "evaluate",
    "forward",
    "generate_gaussian_blobs",
    "init_params",
    "inject",
    "load_csv",
    "loss_and_logit_grad",
    "margin",
    "positive_confidence",
    "sigmoid",
    "soft_indicator",
    "softmax",
    "split",
    "standardize",
    "train",
]
