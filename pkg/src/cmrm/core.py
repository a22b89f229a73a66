"""Confidence margins, conformal quantile thresholds, and the margin-risk
regularizer (multi-class soft-weighted form and the binary two-threshold
hinge form), each with exact logit gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ClassAbsentError, ConfigError, EmptySampleError, LabelError
from .nets import sigmoid, softmax


@dataclass(frozen=True)
class CmrmConfig:
    alpha: float = 0.15
    lam: float = 0.1
    temp: float = 1.0
    grad_through_threshold: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.temp <= 0:
            raise ConfigError("temp must be > 0")


@dataclass(frozen=True)
class BinaryCmrmConfig:
    alpha_pos: float = 0.2
    alpha_neg: float = 0.2
    lambda_pos: float = 0.4
    lambda_neg: float = 0.4

    def __post_init__(self):
        if not (0 < self.alpha_pos < 1 and 0 < self.alpha_neg < 1):
            raise ConfigError("alpha_pos/alpha_neg must be in (0, 1)")
        if self.lambda_pos < 0 or self.lambda_neg < 0:
            raise ConfigError("lambda_pos/lambda_neg must be >= 0")


@dataclass(frozen=True)
class QuantileThreshold:
    tau: float
    alpha: float
    sample_size: int


@dataclass(frozen=True)
class BinaryThresholds:
    tau_pos: float
    tau_neg: float
    n_pos: int
    n_neg: int


def margin(probs: np.ndarray, observed_label: int) -> float:
    """Probability of the observed label minus the best competing probability."""
    p = np.asarray(probs, dtype=np.float64)
    K = p.shape[0]
    if not 0 <= observed_label < K:
        raise LabelError(f"label {observed_label} out of range for K={K}")
    rest = np.delete(p, observed_label)
    return float(p[observed_label] - rest.max())


def batch_margins(probs: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized margins for a batch, plus the competing argmax per row.

    Ties in the competing max resolve to the lowest class index.
    """
    P = np.asarray(probs, dtype=np.float64)
    s, K = P.shape
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= K):
        raise LabelError(f"labels must lie in 0..{K - 1}")
    y = y.astype(np.intp)
    masked = P.copy()
    masked[np.arange(s), y] = -np.inf
    comp = masked.argmax(axis=1)
    return P[np.arange(s), y] - masked[np.arange(s), comp], comp


def batch_quantile(margins: np.ndarray, alpha: float) -> QuantileThreshold:
    """k-th smallest value with k = min(ceil(alpha*(s+1)), s)."""
    m = np.asarray(margins, dtype=np.float64)
    if m.size == 0:
        raise EmptySampleError("quantile of an empty sample")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must be in (0, 1)")
    s = m.size
    k = min(int(np.ceil(alpha * (s + 1))), s)
    tau = float(np.sort(m)[k - 1])
    return QuantileThreshold(tau=tau, alpha=alpha, sample_size=s)


def soft_indicator(x, tau, temp: float):
    """sigmoid((x - tau) / temp); smooth stand-in for 1[x >= tau]."""
    if temp <= 0:
        raise ConfigError("temp must be > 0")
    return sigmoid((np.asarray(x, dtype=np.float64) - tau) / temp)


def cmrm_loss(
    logits: np.ndarray,
    observed_labels,
    cfg: CmrmConfig,
    threshold: QuantileThreshold | None = None,
) -> tuple[float, np.ndarray, QuantileThreshold, np.ndarray]:
    """Batch-level conformal margin risk.

    Returns (loss, per-sample soft weights, threshold, d loss / d logits).
    The threshold comes from this batch unless one is passed in (a passed
    threshold is always treated as a constant); with grad_through_threshold
    off (default) the batch threshold is likewise detached.
    """
    Z = np.asarray(logits, dtype=np.float64)
    s, K = Z.shape
    if s == 0:
        raise EmptySampleError("empty batch")
    P = softmax(Z)
    y = np.asarray(observed_labels).astype(np.intp)
    M, comp = batch_margins(P, y)
    th = batch_quantile(M, cfg.alpha) if threshold is None else threshold
    w = soft_indicator(M, th.tau, cfg.temp)
    loss = float(np.mean(-M * w))

    # d loss / d M_i through the direct path: -w_i - M_i w'_i / temp
    dM = (-w - M * w * (1.0 - w) / cfg.temp) / s
    if cfg.grad_through_threshold and threshold is None:
        # tau equals one order statistic; route d loss/d tau to the first
        # batch index attaining it.
        dtau = float(np.sum(M * w * (1.0 - w)) / cfg.temp / s)
        j = int(np.flatnonzero(M == th.tau)[0])
        dM = dM.copy()
        dM[j] += dtau

    # margins -> probabilities -> logits (softmax jacobian)
    gP = np.zeros_like(P)
    idx = np.arange(s)
    gP[idx, y] += dM
    gP[idx, comp] -= dM
    inner = (gP * P).sum(axis=1, keepdims=True)
    grad = P * (gP - inner)
    return loss, w, th, grad


def positive_confidence(logits: np.ndarray) -> np.ndarray:
    """P(class 1) for a two-logit model: sigmoid(z1 - z0)."""
    Z = np.asarray(logits, dtype=np.float64)
    if Z.shape[1] != 2:
        raise ConfigError("binary confidence requires K = 2 logits")
    return sigmoid(Z[:, 1] - Z[:, 0])


def binary_thresholds(
    pos_confidences: np.ndarray, observed_labels, cfg: BinaryCmrmConfig
) -> BinaryThresholds:
    """Class-conditional tail thresholds on the positive-class confidence.

    tau_neg caps the upper tail of observed negatives; tau_pos caps the
    lower tail of observed positives. Candidates range over the observed
    confidences of the respective class; if no candidate meets the budget,
    fall back to max-negative / min-positive confidence.
    """
    c = np.asarray(pos_confidences, dtype=np.float64)
    y = np.asarray(observed_labels)
    neg = c[y == 0]
    pos = c[y == 1]
    if neg.size == 0 or pos.size == 0:
        raise ClassAbsentError("both classes must be present in the batch")
    n0, n1 = neg.size, pos.size

    budget_neg = np.ceil(cfg.alpha_neg * (n0 + 1)) / n0
    tau_neg = float(neg.max())
    for t in np.unique(neg):  # ascending
        if np.count_nonzero(neg >= t) / n0 <= budget_neg:
            tau_neg = float(t)
            break

    budget_pos = np.ceil(cfg.alpha_pos * (n1 + 1)) / n1
    tau_pos = float(pos.min())
    for t in np.unique(pos)[::-1]:  # descending
        if np.count_nonzero(pos <= t) / n1 <= budget_pos:
            tau_pos = float(t)
            break

    return BinaryThresholds(tau_pos=tau_pos, tau_neg=tau_neg, n_pos=n1, n_neg=n0)


def binary_cmrm_loss(
    logits: np.ndarray,
    observed_labels,
    thresholds: BinaryThresholds,
    cfg: BinaryCmrmConfig,
) -> tuple[float, np.ndarray]:
    """Two-sided hinge regularizer relative to the class-conditional thresholds.

    Thresholds are treated as constants; the hinge derivative at the kink
    is 0; the loss is negative where a hinge is active (it pushes the
    suspected-noisy tails away from their observed labels).
    """
    Z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(observed_labels)
    n = Z.shape[0]
    p1 = positive_confidence(Z)

    neg_excess = np.where(y == 0, p1 - thresholds.tau_neg, 0.0)
    pos_deficit = np.where(y == 1, thresholds.tau_pos - p1, 0.0)
    loss = float(
        np.mean(
            -cfg.lambda_neg * np.maximum(neg_excess, 0.0)
            - cfg.lambda_pos * np.maximum(pos_deficit, 0.0)
        )
    )

    dp1 = np.zeros(n)
    dp1[(y == 0) & (neg_excess > 0)] = -cfg.lambda_neg / n
    dp1[(y == 1) & (pos_deficit > 0)] = cfg.lambda_pos / n
    dz = dp1 * p1 * (1.0 - p1)
    grad = np.zeros_like(Z)
    grad[:, 1] = dz
    grad[:, 0] = -dz
    return loss, grad
