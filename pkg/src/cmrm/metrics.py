"""Classification and diagnostic metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import DegenerateSampleError, MetricError

KDE_GRID_POINTS = 201
FILTER_CUTOFF = 0.5  # a sample counts as "filtered" when its soft weight < 0.5


@dataclass
class MetricReport:
    accuracy: float
    auroc: float | None = None
    auprc: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    m_apss: float | None = None
    pc_apss: float | None = None
    nc_apss: float | None = None

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auroc": self.auroc,
            "auprc": self.auprc,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "m_apss": self.m_apss,
            "pc_apss": self.pc_apss,
            "nc_apss": self.nc_apss,
        }


def accuracy(predicted, true) -> float:
    p = np.asarray(predicted)
    t = np.asarray(true)
    if p.size != t.size or p.size == 0:
        raise MetricError("predictions and labels must be nonempty and equal length")
    return float(np.mean(p == t))


def auroc(scores, labels) -> float:
    """Mann-Whitney U statistic normalized to [0, 1]; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n1 = int(np.count_nonzero(y == 1))
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise MetricError("auroc requires both classes")
    ranks = rankdata(s)  # average ranks handle ties as 1/2 pairs
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def auprc(scores, labels) -> float:
    """Area under the precision-recall step curve, descending-score sweep
    with tied scores processed as one block."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0:
        raise MetricError("auprc requires at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    area = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    n = y.size
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        tp += int(np.count_nonzero(y[i:j] == 1))
        fp += (j - i) - int(np.count_nonzero(y[i:j] == 1))
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(area)


def fpr_fnr(scores, labels, threshold: float = 0.5) -> tuple[float, float]:
    """Predicted positive iff score >= threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == 1
    neg = y == 0
    if not pos.any() or not neg.any():
        raise MetricError("fpr/fnr require both classes")
    pred = s >= threshold
    fpr = float(np.count_nonzero(pred & neg) / np.count_nonzero(neg))
    fnr = float(np.count_nonzero(~pred & pos) / np.count_nonzero(pos))
    return fpr, fnr


def filtered_noise_ratio(weights, mask) -> float | None:
    """Among samples with soft weight < 0.5, the fraction actually mislabeled.

    Returns None when no sample is filtered.
    """
    w = np.asarray(weights, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if w.size != m.size:
        raise MetricError("weights and mask must have equal length")
    filt = w < FILTER_CUTOFF
    if not filt.any():
        return None
    return float(np.count_nonzero(m & filt) / np.count_nonzero(filt))


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * x.size ** (-0.2)
    if bw <= 0:
        raise DegenerateSampleError("zero-bandwidth sample (no spread)")
    return bw


def margin_histogram(margins, mask, bins: int = 40):
    """Clean/noisy bin counts over [-1, 1] plus a pooled Gaussian KDE.

    Returns (bin_edges, clean_counts, noisy_counts, grid, density).
    """
    if bins < 2:
        raise MetricError("need at least 2 bins")
    m = np.asarray(margins, dtype=np.float64)
    msk = np.asarray(mask, dtype=bool)
    if m.size == 0:
        raise MetricError("empty margin sample")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    clean_counts, _ = np.histogram(m[~msk], bins=edges)
    noisy_counts, _ = np.histogram(m[msk], bins=edges)
    bw = silverman_bandwidth(m)
    grid = np.linspace(-1.0, 1.0, KDE_GRID_POINTS)
    z = (grid[:, None] - m[None, :]) / bw
    density = np.exp(-0.5 * z**2).sum(axis=1) / (m.size * bw * np.sqrt(2.0 * np.pi))
    return edges, clean_counts, noisy_counts, grid, density
