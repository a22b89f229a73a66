"""Split conformal prediction with deterministic APS scores.

Used only for evaluation: calibrate a score quantile on a clean held-out
split, then build per-example prediction sets and report their sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CalibrationError, MetricError


@dataclass(frozen=True)
class ApsCalibration:
    qhat: float
    coverage_target: float
    cal_size: int


def _desc_order(probs: np.ndarray) -> np.ndarray:
    # descending probability, ascending class index on ties
    return np.lexsort((np.arange(probs.size), -probs))


def aps_score(probs: np.ndarray, true_label: int) -> float:
    """Cumulative mass of classes ranked above the true label, plus its own."""
    p = np.asarray(probs, dtype=np.float64)
    order = _desc_order(p)
    rank = int(np.flatnonzero(order == true_label)[0])
    return float(p[order[: rank + 1]].sum())


def calibrate(cal_scores, coverage_target: float = 0.9) -> ApsCalibration:
    scores = np.asarray(cal_scores, dtype=np.float64)
    if scores.size == 0:
        raise CalibrationError("empty calibration set")
    m = scores.size
    k = min(int(np.ceil(coverage_target * (m + 1))), m)
    qhat = float(np.sort(scores)[k - 1])
    return ApsCalibration(qhat=qhat, coverage_target=coverage_target, cal_size=m)


def predict_set(probs: np.ndarray, calib: ApsCalibration) -> list[int]:
    """Classes in descending-probability order until mass >= qhat (>= 1 class)."""
    p = np.asarray(probs, dtype=np.float64)
    order = _desc_order(p)
    cum = np.cumsum(p[order])
    cut = int(np.searchsorted(cum, calib.qhat, side="left")) + 1
    cut = min(max(cut, 1), p.size)
    return sorted(int(c) for c in order[:cut])


def apss(sets, labels=None, label_filter: int | None = None) -> float:
    """Mean prediction-set size, optionally over one true-label class."""
    sizes = [len(s) for s in sets]
    if label_filter is not None:
        if labels is None:
            raise MetricError("label filter requires labels")
        sizes = [sz for sz, y in zip(sizes, labels) if y == label_filter]
    if not sizes:
        raise MetricError("no prediction sets after filtering")
    return float(np.mean(sizes))
