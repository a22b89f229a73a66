"""Experiment orchestration shared by the CLI: config parsing, dataset
assembly, training runs, and atomic artifact writing."""

from __future__ import annotations

import configparser
import csv
import io
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import core, data, losses, metrics, nets, noise, trainer
from .exceptions import ConfigError
from .rng import substream


@dataclass
class ExperimentConfig:
    # data
    source: str = "synth"  # synth | csv
    csv_path: str | None = None
    label_column: str = "label"
    group_column: str | None = None
    num_classes: int = 3
    dim: int = 2
    per_class: int = 200
    separation: float = 3.0
    fractions: tuple[float, float, float, float] = (0.6, 0.1, 0.1, 0.2)
    standardize: bool = True
    # noise (kind None = clean)
    noise_kind: str | None = None
    noise_rate: float = 0.2
    group_size: int | None = None
    # model
    architecture: str = "linear"
    hidden: int = 32
    # train
    train: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)
    # eval
    coverage_target: float = 0.9
    with_conformal: bool = True
    # output
    out_dir: str = "out"

    @property
    def seed(self) -> int:
        return self.train.seed


def _get(cp, section, key, cast, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if cast is tuple:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return cast(raw)
    except ValueError:
        raise ConfigError(f"invalid value for [{section}] {key}: {raw!r}") from None


def load_config(path, seed_override: int | None = None, out_override: str | None = None):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)

    base_kind = _get(cp, "train", "base_loss", str, "ce")
    base = losses.BaseLossSpec(
        kind=base_kind,
        gamma=_get(cp, "train", "focal_gamma", float, 2.0),
        q=_get(cp, "train", "gce_q", float, 0.7),
        margin_scale=_get(cp, "train", "ldam_scale", float, 0.5),
    )

    cmrm_cfg = None
    if cp.has_section("cmrm"):
        kind = _get(cp, "cmrm", "kind", str, "multiclass")
        if kind == "multiclass":
            cmrm_cfg = core.CmrmConfig(
                alpha=_get(cp, "cmrm", "alpha", float, 0.15),
                lam=_get(cp, "cmrm", "lambda", float, 0.1),
                temp=_get(cp, "cmrm", "temp", float, 1.0),
                grad_through_threshold=_get(
                    cp, "cmrm", "grad_through_threshold", bool, False
                ),
            )
        elif kind == "binary":
            cmrm_cfg = core.BinaryCmrmConfig(
                alpha_pos=_get(cp, "cmrm", "alpha_pos", float, 0.2),
                alpha_neg=_get(cp, "cmrm", "alpha_neg", float, 0.2),
                lambda_pos=_get(cp, "cmrm", "lambda_pos", float, 0.4),
                lambda_neg=_get(cp, "cmrm", "lambda_neg", float, 0.4),
            )
        else:
            raise ConfigError(f"invalid value for [cmrm] kind: {kind!r}")

    seed = _get(cp, "train", "seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    milestones = _get(cp, "train", "lr_milestones", tuple, ())
    tcfg = trainer.TrainConfig(
        epochs=_get(cp, "train", "epochs", int, 30),
        batch_size=_get(cp, "train", "batch_size", int, 64),
        learning_rate=_get(cp, "train", "learning_rate", float, 0.05),
        momentum=_get(cp, "train", "momentum", float, 0.9),
        weight_decay=_get(cp, "train", "weight_decay", float, 0.0002),
        lr_milestones=tuple(int(m) for m in milestones),
        lr_decay_factor=_get(cp, "train", "lr_decay_factor", float, 0.01),
        seed=seed,
        base_loss=base,
        cmrm=cmrm_cfg,
        cmrm_warmup_epochs=_get(cp, "train", "cmrm_warmup_epochs", int, 0),
    )

    noise_kind = _get(cp, "noise", "kind", str, None) if cp.has_section("noise") else None
    source = _get(cp, "data", "source", str, "synth")
    if source not in ("synth", "csv"):
        raise ConfigError(f"invalid value for [data] source: {source!r}")

    cfg = ExperimentConfig(
        source=source,
        csv_path=_get(cp, "data", "csv_path", str, None),
        label_column=_get(cp, "data", "label_column", str, "label"),
        group_column=_get(cp, "data", "group_column", str, None),
        num_classes=_get(cp, "data", "num_classes", int, 3),
        dim=_get(cp, "data", "dim", int, 2),
        per_class=_get(cp, "data", "per_class", int, 200),
        separation=_get(cp, "data", "separation", float, 3.0),
        fractions=tuple(_get(cp, "data", "fractions", tuple, (0.6, 0.1, 0.1, 0.2))),
        standardize=_get(cp, "data", "standardize", bool, True),
        noise_kind=noise_kind,
        noise_rate=_get(cp, "noise", "rate", float, 0.2) if cp.has_section("noise") else 0.2,
        group_size=_get(cp, "noise", "group_size", int, None) if cp.has_section("noise") else None,
        architecture=_get(cp, "model", "architecture", str, "linear"),
        hidden=_get(cp, "model", "hidden", int, 32),
        train=tcfg,
        coverage_target=_get(cp, "eval", "coverage_target", float, 0.9),
        with_conformal=_get(cp, "eval", "with_conformal", bool, True),
        out_dir=out_override or _get(cp, "output", "dir", str, "out"),
    )
    if cfg.source == "csv" and not cfg.csv_path:
        raise ConfigError("[data] csv_path is required when source = csv")
    echo = {s: dict(cp.items(s)) for s in cp.sections()}
    return cfg, echo


def build_dataset(cfg: ExperimentConfig) -> data.NoisyDataset:
    """Load or generate, split, corrupt the train split, standardize."""
    if cfg.source == "synth":
        ds = data.generate_gaussian_blobs(
            data.SynthSpec(
                num_classes=cfg.num_classes,
                dim=cfg.dim,
                per_class_count=cfg.per_class,
                class_separation=cfg.separation,
                seed=cfg.seed,
            )
        )
    else:
        ds = data.load_csv(cfg.csv_path, cfg.label_column, cfg.group_column)
    ds = data.split(ds, cfg.fractions, seed=cfg.seed)

    if cfg.noise_kind is not None:
        group_of = None
        if cfg.noise_kind == noise.GROUP:
            if cfg.group_size is not None:
                g = cfg.group_size
                group_of = lambda label: label // g  # noqa: E731
            elif ds.group_of is not None:
                mapping = {}
                for lab, grp in zip(ds.clean_labels, ds.group_of):
                    mapping.setdefault(int(lab), int(grp))
                group_of = mapping.get
            else:
                raise ConfigError("group noise needs group_size or a group column")
        spec = noise.NoiseSpec(
            kind=cfg.noise_kind, rate=cfg.noise_rate, seed=cfg.seed, group_of=group_of
        )
        idx = ds.indices("train")
        observed_tr, mask_tr = noise.inject(ds.clean_labels[idx], spec, ds.num_classes)
        observed = ds.observed_labels.copy()
        mask = ds.mask.copy()
        observed[idx] = observed_tr
        mask[idx] = mask_tr
        ds = replace(ds, observed_labels=observed, mask=mask)

    if cfg.standardize:
        ds = data.standardize(ds)
    return ds


def run_train(cfg: ExperimentConfig):
    """Full pipeline: dataset, init, train, evaluate. Returns
    (dataset, trained params, epoch records, MetricReport)."""
    ds = build_dataset(cfg)
    init = nets.init_params(
        cfg.architecture,
        ds.features.shape[1],
        ds.num_classes,
        substream(cfg.seed, "init"),
        hidden=cfg.hidden,
    )
    params, records = trainer.train(init, ds, cfg.train)
    report = trainer.evaluate(
        params, ds, "test", with_conformal=cfg.with_conformal,
        coverage_target=cfg.coverage_target,
    )
    return ds, params, records, report


# --- artifact writers (atomic: temp file + rename) ---

def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


EPOCH_COLUMNS = (
    "epoch", "total_loss", "cl_loss", "cr_loss", "tau", "tau_pos", "tau_neg",
    "filter_noise_ratio", "val_acc", "val_auroc",
)


def epoch_csv_text(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EPOCH_COLUMNS)
    for r in records:
        writer.writerow([_cell(getattr(r, c)) for c in EPOCH_COLUMNS])
    return buf.getvalue()


def write_epoch_csv(records, path) -> None:
    _atomic_write(path, epoch_csv_text(records))


def write_report_json(report: metrics.MetricReport, echo: dict, seed: int, path) -> None:
    payload = {"config": echo, "seed": seed, "metrics": report.as_dict()}
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_model_json(params: nets.ModelParams, path) -> None:
    payload = {
        "kind": params.kind,
        "layers": [
            {"weights": W.tolist(), "bias": b.tolist()} for W, b in params.layers
        ],
    }
    _atomic_write(path, json.dumps(payload, sort_keys=True) + "\n")


def load_model_json(path) -> nets.ModelParams:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    layers = [
        (np.asarray(l["weights"], dtype=np.float64), np.asarray(l["bias"], dtype=np.float64))
        for l in payload["layers"]
    ]
    return nets.ModelParams(payload["kind"], layers)


def write_margin_histogram_csv(margins, mask, path, bins: int = 40) -> None:
    """Plot-ready KDE/histogram export; rows align on the KDE grid with
    histogram counts padded with empty cells past the bin count."""
    _, clean_counts, noisy_counts, grid, density = metrics.margin_histogram(
        margins, mask, bins
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["grid_point", "density", "clean_count", "noisy_count"])
    for i, (g, d) in enumerate(zip(grid, density)):
        cc = int(clean_counts[i]) if i < len(clean_counts) else None
        nc = int(noisy_counts[i]) if i < len(noisy_counts) else None
        writer.writerow([_cell(float(g)), _cell(float(d)), _cell(cc), _cell(nc)])
    _atomic_write(path, buf.getvalue())
