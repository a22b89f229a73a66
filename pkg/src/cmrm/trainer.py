"""Mini-batch SGD over base loss + margin regularizer, with momentum,
weight decay, milestone learning-rate decay, and per-epoch records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conformal, core, losses, metrics, nets
from .data import NoisyDataset
from .exceptions import ClassAbsentError, ConfigError, SplitError
from .rng import substream


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0002
    lr_milestones: tuple[int, ...] = ()
    lr_decay_factor: float = 0.01
    seed: int = 0
    base_loss: losses.BaseLossSpec = field(default_factory=losses.BaseLossSpec)
    cmrm: core.CmrmConfig | core.BinaryCmrmConfig | None = None
    cmrm_warmup_epochs: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must be in (0, 1]")
        ms = list(self.lr_milestones)
        if ms != sorted(set(ms)) or any(m < 1 for m in ms) or any(m >= self.epochs for m in ms):
            raise ConfigError("lr_milestones must be strictly increasing and < epochs")


@dataclass
class EpochRecord:
    epoch: int
    total_loss: float
    cl_loss: float
    cr_loss: float | None = None
    tau: float | None = None
    tau_pos: float | None = None
    tau_neg: float | None = None
    filter_noise_ratio: float | None = None
    val_acc: float | None = None
    val_auroc: float | None = None


def train(
    params: nets.ModelParams, dataset: NoisyDataset, cfg: TrainConfig
) -> tuple[nets.ModelParams, list[EpochRecord]]:
    train_idx = dataset.indices("train")
    if train_idx.size == 0:
        raise SplitError("train split is empty")
    binary_cmrm = isinstance(cfg.cmrm, core.BinaryCmrmConfig)
    if binary_cmrm and dataset.num_classes != 2:
        raise ConfigError("binary CMRM requires a 2-class dataset")

    params = params.copy()
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers]
    shuffle_rng = substream(cfg.seed, "shuffle")
    lr = cfg.learning_rate
    n_train = train_idx.size
    records: list[EpochRecord] = []
    # last-seen soft weight per train sample, for the filtered-noise ratio
    last_weights = np.ones(n_train)

    for epoch in range(1, cfg.epochs + 1):
        if epoch in cfg.lr_milestones:
            lr *= cfg.lr_decay_factor
        perm = shuffle_rng.permutation(n_train)
        cmrm_active = cfg.cmrm is not None and epoch > cfg.cmrm_warmup_epochs

        cl_sum = cr_sum = 0.0
        tau_sum = tau_pos_sum = tau_neg_sum = 0.0
        tau_batches = 0
        seen = 0
        for start in range(0, n_train, cfg.batch_size):
            rows = train_idx[perm[start : start + cfg.batch_size]]
            X = dataset.features[rows]
            y = dataset.observed_labels[rows]
            bs = rows.size

            Z = nets.forward(params, X)
            cl_loss, grad = losses.loss_and_logit_grad(cfg.base_loss, Z, y)
            cr_loss = 0.0
            if cmrm_active:
                if binary_cmrm:
                    try:
                        p1 = core.positive_confidence(Z)
                        th = core.binary_thresholds(p1, y, cfg.cmrm)
                    except ClassAbsentError:
                        th = None
                    if th is not None:
                        cr_loss, cr_grad = core.binary_cmrm_loss(Z, y, th, cfg.cmrm)
                        grad = grad + cr_grad
                        tau_pos_sum += th.tau_pos
                        tau_neg_sum += th.tau_neg
                        tau_batches += 1
                else:
                    cr_loss, w, th, cr_grad = core.cmrm_loss(Z, y, cfg.cmrm)
                    if cfg.cmrm.lam != 0.0:
                        grad = grad + cfg.cmrm.lam * cr_grad
                    last_weights[perm[start : start + cfg.batch_size]] = w
                    tau_sum += th.tau
                    tau_batches += 1

            pgrads = nets.backward(params, X, grad)
            for i, ((W, b), (vW, vb), (gW, gb)) in enumerate(
                zip(params.layers, velocity, pgrads)
            ):
                vW = cfg.momentum * vW - lr * (gW + cfg.weight_decay * W)
                vb = cfg.momentum * vb - lr * (gb + cfg.weight_decay * b)
                velocity[i] = (vW, vb)
                params.layers[i] = (W + vW, b + vb)

            cl_sum += cl_loss * bs
            cr_sum += cr_loss * bs
            seen += bs

        cl_mean = cl_sum / seen
        cr_mean = cr_sum / seen
        rec = EpochRecord(epoch=epoch, total_loss=cl_mean, cl_loss=cl_mean)
        if cfg.cmrm is not None:
            rec.cr_loss = cr_mean
            if binary_cmrm:
                # the binary composite already embeds its strength factors
                rec.total_loss = cl_mean + cr_mean
                if tau_batches:
                    rec.tau_pos = tau_pos_sum / tau_batches
                    rec.tau_neg = tau_neg_sum / tau_batches
            else:
                rec.total_loss = cl_mean + cfg.cmrm.lam * cr_mean
                if tau_batches:
                    rec.tau = tau_sum / tau_batches
                if cmrm_active:
                    rec.filter_noise_ratio = metrics.filtered_noise_ratio(
                        last_weights, dataset.mask[train_idx]
                    )
        val_idx = dataset.indices("val")
        if val_idx.size:
            rep = evaluate(params, dataset, "val", with_conformal=False)
            rec.val_acc = rep.accuracy
            rec.val_auroc = rep.auroc
        records.append(rec)
    return params, records


def predict_proba(params: nets.ModelParams, X: np.ndarray) -> np.ndarray:
    return nets.softmax(nets.forward(params, X))


def evaluate(
    params: nets.ModelParams,
    dataset: NoisyDataset,
    split: str = "test",
    with_conformal: bool = True,
    coverage_target: float = 0.9,
) -> metrics.MetricReport:
    """Accuracy on clean labels; ranking/error metrics for K = 2; optional
    conformal set sizes calibrated on the cal split."""
    idx = dataset.indices(split)
    if idx.size == 0:
        raise SplitError(f"{split} split is empty")
    X = dataset.features[idx]
    y = dataset.clean_labels[idx]
    P = predict_proba(params, X)
    pred = P.argmax(axis=1)
    report = metrics.MetricReport(accuracy=metrics.accuracy(pred, y))
    if dataset.num_classes == 2:
        scores = P[:, 1]
        report.auroc = metrics.auroc(scores, y)
        report.auprc = metrics.auprc(scores, y)
        report.fpr, report.fnr = metrics.fpr_fnr(scores, y)
    if with_conformal:
        cov, report.m_apss, report.pc_apss, report.nc_apss = conformal_report(
            params, dataset, split, coverage_target
        )
    return report


def conformal_report(
    params: nets.ModelParams,
    dataset: NoisyDataset,
    split: str = "test",
    coverage_target: float = 0.9,
) -> tuple[float, float, float | None, float | None]:
    """(coverage, marginal APSS, positive-class APSS, negative-class APSS).

    Calibration always uses the clean cal split.
    """
    cal_idx = dataset.indices("cal")
    if cal_idx.size == 0:
        raise SplitError("cal split is empty")
    P_cal = predict_proba(params, dataset.features[cal_idx])
    cal_scores = [
        conformal.aps_score(p, int(t)) for p, t in zip(P_cal, dataset.clean_labels[cal_idx])
    ]
    calib = conformal.calibrate(cal_scores, coverage_target)

    idx = dataset.indices(split)
    P = predict_proba(params, dataset.features[idx])
    y = dataset.clean_labels[idx]
    sets = [conformal.predict_set(p, calib) for p in P]
    coverage = float(np.mean([int(t) in s for s, t in zip(sets, y)]))
    m_apss = conformal.apss(sets)
    pc = nc = None
    if dataset.num_classes == 2:
        if np.any(y == 1):
            pc = conformal.apss(sets, labels=y, label_filter=1)
        if np.any(y == 0):
            nc = conformal.apss(sets, labels=y, label_filter=0)
    return coverage, m_apss, pc, nc
