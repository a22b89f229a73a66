"""Shared test helpers."""

import numpy as np

from cmrm import nets


def fd_logit_grad(loss_fn, Z, step=1e-6):
    """Central-difference gradient of a scalar loss over a logit matrix."""
    Z = np.asarray(Z, dtype=np.float64)
    g = np.zeros_like(Z)
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            up, dn = Z.copy(), Z.copy()
            up[i, j] += step
            dn[i, j] -= step
            g[i, j] = (loss_fn(up) - loss_fn(dn)) / (2.0 * step)
    return g


def logits_for_binary_margins(margins):
    """Two-class logit rows whose label-1 margins equal the given values.

    For K = 2 the margin of label 1 is p1 - p0 = 2*p1 - 1, so p1 = (m+1)/2
    and z1 - z0 = log(p1/(1-p1)).
    """
    m = np.asarray(margins, dtype=np.float64)
    p1 = (m + 1.0) / 2.0
    z = np.log(p1 / (1.0 - p1))
    Z = np.zeros((m.size, 2))
    Z[:, 1] = z
    return Z


def tiny_linear(W, b):
    """ModelParams wrapper for an explicit single-layer weight matrix."""
    return nets.ModelParams(
        nets.LINEAR,
        [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))],
    )
