"""Label-noise injectors.

All injectors corrupt exactly floor(rate * n) uniformly chosen indices and
keep a boolean mask of which labels were flipped, so downstream
diagnostics can measure how well training filters the corrupted samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError, GroupError, LabelError
from .rng import substream

SYMMETRIC = "symmetric"
CIRCULAR = "circular"
GROUP = "group"
BINARY_FLIP = "binary_flip"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = SYMMETRIC
    rate: float = 0.2
    seed: int = 0
    # maps a label to its group id; required for kind == "group"
    group_of: Callable[[int], int] | None = None

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, CIRCULAR, GROUP, BINARY_FLIP):
            raise ConfigError(f"unknown noise kind: {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("noise rate must be in [0, 1]")
        if self.kind == GROUP and self.group_of is None:
            raise ConfigError("group noise requires group_of")


def inject(clean_labels, spec: NoiseSpec, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (observed labels, flipped mask)."""
    y = np.asarray(clean_labels).astype(np.intp)
    n = y.size
    if n and (y.min() < 0 or y.max() >= K):
        raise LabelError(f"labels must lie in 0..{K - 1}")
    if spec.kind == BINARY_FLIP and K != 2:
        raise ConfigError("binary_flip requires K = 2")

    rng = substream(spec.seed, "noise")
    n_flip = int(np.floor(spec.rate * n))
    picked = rng.choice(n, size=n_flip, replace=False) if n_flip else np.array([], dtype=np.intp)

    observed = y.copy()
    for i in picked:
        yi = int(y[i])
        if spec.kind == SYMMETRIC:
            r = int(rng.integers(0, K - 1))
            observed[i] = r + (r >= yi)
        elif spec.kind == CIRCULAR:
            observed[i] = (yi + 1) % K
        elif spec.kind == BINARY_FLIP:
            observed[i] = 1 - yi
        else:  # GROUP: uniform different label within the same group
            gid = spec.group_of(yi)
            peers = [c for c in range(K) if c != yi and spec.group_of(c) == gid]
            if not peers:
                raise GroupError(f"label {yi} is alone in group {gid}")
            observed[i] = peers[int(rng.integers(0, len(peers)))]

    mask = observed != y
    return observed, mask
