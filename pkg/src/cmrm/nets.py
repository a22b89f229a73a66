"""Small dense classifiers with manual reverse-mode gradients.

Two architectures: a linear map and a two-layer MLP (affine -> ReLU ->
affine). Everything is float64 numpy; gradients are exact and checked
against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, ShapeError

LINEAR = "linear"
MLP = "mlp"


@dataclass
class ModelParams:
    """Weights and biases of a linear or two-layer model.

    ``layers`` is a list of (W, b) pairs with W of shape (fan_in, fan_out)
    and b of shape (fan_out,). A ReLU sits between consecutive layers.
    """

    kind: str
    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, [(W.copy(), b.copy()) for W, b in self.layers])

    def flatten(self) -> np.ndarray:
        return np.concatenate([block.ravel() for W, b in self.layers for block in (W, b)])

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        out = self.copy()
        pos = 0
        for i, (W, b) in enumerate(out.layers):
            out.layers[i] = (
                flat[pos : pos + W.size].reshape(W.shape).copy(),
                flat[pos + W.size : pos + W.size + b.size].copy(),
            )
            pos += W.size + b.size
        return out

    def num_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)


def init_params(
    kind: str,
    input_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    hidden: int = 32,
) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if num_classes < 2:
        raise ShapeError(f"need at least 2 classes, got {num_classes}")
    if kind == LINEAR:
        dims = [(input_dim, num_classes)]
    elif kind == MLP:
        dims = [(input_dim, hidden), (hidden, num_classes)]
    else:
        raise ShapeError(f"unknown architecture: {kind!r}")
    layers = []
    for fan_in, fan_out in dims:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    return ModelParams(kind, layers)


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Logits of shape (batch, K)."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeError(
            f"features shape {X.shape} incompatible with input_dim {params.input_dim}"
        )
    h = X
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def backward(
    params: ModelParams, features: np.ndarray, logit_grad: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of sum_i <logit_grad_i, logits_i> w.r.t. each (W, b).

    ReLU subgradient at exactly 0 is taken as 0.
    """
    X = np.asarray(features, dtype=np.float64)
    G = np.asarray(logit_grad, dtype=np.float64)
    if G.shape != (X.shape[0], params.num_classes):
        raise ShapeError(f"logit_grad shape {G.shape} does not match batch")
    # Re-run the forward pass keeping pre-activation inputs of each layer.
    inputs = []
    h = X
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        inputs.append(h)
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)  # type: ignore
    g = G
    for i in range(last, -1, -1):
        W, b = params.layers[i]
        a = inputs[i]
        grads[i] = (a.T @ g, g.sum(axis=0))
        if i > 0:
            g = g @ W.T
            pre = inputs[i]  # post-ReLU output of layer i-1
            g = g * (pre > 0.0)
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise max-subtracted softmax. Accepts (K,) or (s, K)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax requires finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z):
    """Numerically stable logistic function; saturates instead of overflowing."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)
