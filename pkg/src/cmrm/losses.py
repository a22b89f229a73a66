"""Base classification losses with per-batch mean value and exact logit gradients.

Supported: cross-entropy, focal, generalized cross-entropy, label-
distribution-aware margin (LDAM), and a binary hinge on the positive-class
logit. Each returns (mean loss, gradient of the mean loss w.r.t. logits).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, LabelError
from .nets import softmax

CE = "ce"
FOCAL = "focal"
GCE = "gce"
LDAM = "ldam"
HINGE = "hinge"

_P_FLOOR = 1e-12


@dataclass(frozen=True)
class BaseLossSpec:
    kind: str = CE
    gamma: float = 2.0  # focal
    q: float = 0.7  # gce
    margin_scale: float = 0.5  # ldam
    class_counts: tuple[int, ...] | None = None  # ldam

    def __post_init__(self):
        if self.kind not in (CE, FOCAL, GCE, LDAM, HINGE):
            raise ConfigError(f"unknown loss kind: {self.kind!r}")
        if self.kind == FOCAL and self.gamma < 0:
            raise ConfigError("focal gamma must be >= 0")
        if self.kind == GCE and not 0 < self.q <= 1:
            raise ConfigError("gce q must be in (0, 1]")
        if self.kind == LDAM:
            if self.margin_scale < 0:
                raise ConfigError("ldam margin_scale must be >= 0")
            if self.class_counts is not None and any(c < 1 for c in self.class_counts):
                raise ConfigError("ldam class_counts must all be >= 1")


def _check_labels(labels: np.ndarray, K: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= K):
        raise LabelError(f"labels must lie in 0..{K - 1}")
    return y.astype(np.intp)


def loss_and_logit_grad(
    spec: BaseLossSpec, logits: np.ndarray, labels
) -> tuple[float, np.ndarray]:
    Z = np.asarray(logits, dtype=np.float64)
    s, K = Z.shape
    y = _check_labels(labels, K)
    idx = np.arange(s)

    if spec.kind == HINGE:
        if K != 2:
            raise ConfigError("hinge loss requires exactly 2 classes")
        a = np.where(y == 1, 1.0, -1.0)
        margins = 1.0 - a * Z[:, 1]
        loss = float(np.maximum(margins, 0.0).mean())
        grad = np.zeros_like(Z)
        grad[:, 1] = np.where(margins > 0.0, -a, 0.0) / s
        return loss, grad

    if spec.kind == LDAM:
        if spec.class_counts is None:
            counts = np.ones(K)
        else:
            if len(spec.class_counts) != K:
                raise ConfigError("ldam class_counts length must equal K")
            counts = np.asarray(spec.class_counts, dtype=np.float64)
        delta = spec.margin_scale / counts ** 0.25
        Zm = Z.copy()
        Zm[idx, y] -= delta[y]
        P = softmax(Zm)
        loss = float(-np.log(np.maximum(P[idx, y], _P_FLOOR)).mean())
        grad = P.copy()
        grad[idx, y] -= 1.0
        return loss, grad / s

    P = softmax(Z)
    py = P[idx, y]

    if spec.kind == CE:
        loss = float(-np.log(np.maximum(py, _P_FLOOR)).mean())
        grad = P.copy()
        grad[idx, y] -= 1.0
        return loss, grad / s

    if spec.kind == FOCAL:
        g = spec.gamma
        logp = np.log(np.maximum(py, _P_FLOOR))
        loss = float((-((1.0 - py) ** g) * logp).mean())
        # d loss_i / d p_y, then chain through the softmax jacobian; the
        # jacobian contracted with e_y gives p_y * (onehot - P).
        if g == 0.0:
            dldp = -1.0 / np.maximum(py, _P_FLOOR)
        else:
            dldp = g * (1.0 - py) ** (g - 1.0) * logp - (1.0 - py) ** g / np.maximum(
                py, _P_FLOOR
            )
        grad = -P * (dldp * py)[:, None]
        grad[idx, y] += dldp * py
        return loss, grad / s

    # GCE: (1 - p_y^q)/q, gradient -p_y^q * (onehot - P)
    q = spec.q
    loss = float(((1.0 - py**q) / q).mean())
    coef = py**q
    grad = -P * (-coef)[:, None]
    grad[idx, y] += -coef
    return loss, grad / s
