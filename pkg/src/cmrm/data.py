"""Dataset container, synthetic blob generation, CSV round-tripping,
deterministic splitting, and train-statistics standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import FormatError, SplitError
from .rng import substream

SPLITS = ("train", "val", "cal", "test")


@dataclass
class NoisyDataset:
    features: np.ndarray  # (n, d) float64
    clean_labels: np.ndarray  # (n,) int
    observed_labels: np.ndarray  # (n,) int
    mask: np.ndarray  # (n,) bool, True where observed != clean
    num_classes: int
    split_of: np.ndarray | None = None  # (n,) strings from SPLITS
    group_of: np.ndarray | None = None  # (n,) int, optional
    label_column: str = "label"
    feature_names: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def indices(self, split: str) -> np.ndarray:
        if self.split_of is None:
            raise SplitError("dataset has not been split")
        return np.flatnonzero(self.split_of == split)

    def subset_arrays(self, split: str):
        idx = self.indices(split)
        return (
            self.features[idx],
            self.observed_labels[idx],
            self.clean_labels[idx],
            self.mask[idx],
        )


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 3
    dim: int = 2
    per_class_count: int = 200
    class_separation: float = 3.0
    seed: int = 0


def generate_gaussian_blobs(spec: SynthSpec) -> NoisyDataset:
    """Unit-covariance Gaussian classes on axis-aligned directions.

    Class k's mean sits on coordinate k mod d, sign-flipped on each wrap
    so classes stay distinguishable when K > d.
    """
    rng = substream(spec.seed, "synth")
    K, d, m = spec.num_classes, spec.dim, spec.per_class_count
    means = np.zeros((K, d))
    for k in range(K):
        means[k, k % d] = spec.class_separation * (-1.0) ** (k // d)
    X = np.vstack([means[k] + rng.standard_normal((m, d)) for k in range(K)])
    y = np.repeat(np.arange(K), m)
    return NoisyDataset(
        features=X,
        clean_labels=y,
        observed_labels=y.copy(),
        mask=np.zeros(K * m, dtype=bool),
        num_classes=K,
        feature_names=[f"x{j}" for j in range(d)],
    )


def load_csv(path, label_column: str = "label", group_column: str | None = None) -> NoisyDataset:
    """Read a header-first numeric CSV into a dataset (observed = clean)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise FormatError(f"{path}: missing label column {label_column!r}")
        if group_column is not None and group_column not in header:
            raise FormatError(f"{path}: missing group column {group_column!r}")
        li = header.index(label_column)
        gi = header.index(group_column) if group_column else None
        feat_cols = [j for j in range(len(header)) if j != li and j != gi]

        feats, labels, groups = [], [], []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise FormatError(f"{path}: ragged row {rownum}")
            try:
                labels.append(int(row[li]))
            except ValueError:
                raise FormatError(
                    f"{path}: non-integer label at row {rownum}, column {label_column!r}"
                ) from None
            if gi is not None:
                groups.append(int(row[gi]))
            vals = []
            for j in feat_cols:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise FormatError(
                        f"{path}: non-numeric value at row {rownum}, column {header[j]!r}"
                    ) from None
            feats.append(vals)
    if not feats:
        raise FormatError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=np.intp)
    if y.min() < 0:
        raise FormatError(f"{path}: negative label")
    return NoisyDataset(
        features=np.asarray(feats, dtype=np.float64),
        clean_labels=y,
        observed_labels=y.copy(),
        mask=np.zeros(y.size, dtype=bool),
        num_classes=int(y.max()) + 1,
        group_of=np.asarray(groups, dtype=np.intp) if groups else None,
        label_column=label_column,
        feature_names=[header[j] for j in feat_cols],
    )


def write_csv(dataset: NoisyDataset, path, labels: np.ndarray | None = None) -> None:
    """Write features plus one label column (observed labels by default)."""
    y = dataset.observed_labels if labels is None else labels
    names = dataset.feature_names or [f"x{j}" for j in range(dataset.features.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + [dataset.label_column])
        for row, lab in zip(dataset.features, y):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def split(dataset: NoisyDataset, fractions=(0.6, 0.1, 0.1, 0.2), seed: int = 0) -> NoisyDataset:
    """Deterministic shuffled partition into train/val/cal/test."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size != 4 or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise SplitError("fractions must be 4 nonnegative values summing to 1")
    n = dataset.n
    # largest-remainder apportionment keeps every count within 1 of fraction*n
    raw = fr * n
    counts = np.floor(raw).astype(int)
    rem = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    if np.any(counts == 0):
        raise SplitError(f"split fractions {tuple(fr)} leave an empty split for n={n}")
    perm = substream(seed, "split").permutation(n)
    tags = np.empty(n, dtype=object)
    pos = 0
    for name, c in zip(SPLITS, counts):
        tags[perm[pos : pos + c]] = name
        pos += c
    return replace(dataset, split_of=tags)


def standardize(dataset: NoisyDataset) -> NoisyDataset:
    """Center/scale every column by the train split's mean and std.

    Columns with zero train-split std pass through unchanged.
    """
    idx = dataset.indices("train")
    if idx.size == 0:
        raise SplitError("train split is empty")
    mu = dataset.features[idx].mean(axis=0)
    sd = dataset.features[idx].std(axis=0)
    keep = sd == 0.0
    mu = np.where(keep, 0.0, mu)
    sd = np.where(keep, 1.0, sd)
    return replace(dataset, features=(dataset.features - mu) / sd)
