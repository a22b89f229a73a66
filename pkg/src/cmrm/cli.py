"""Command-line surface: train, sweep, verify, inject-noise."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import core, noise, pipeline, trainer, verify
from .exceptions import CmrmError, ConfigError, FormatError
from .rng import substream

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2
EXIT_USAGE = 64

DEFAULT_GRID = (0.05, 0.1, 0.15, 0.2, 0.25)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _values(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def _int_values(raw: str) -> list[int]:
    return [int(v) for v in raw.replace(",", " ").split()]


# --- train ---

def cmd_train(args) -> int:
    try:
        cfg, echo = pipeline.load_config(args.config, args.seed, args.out)
    except FileNotFoundError as e:
        print(f"error: config or data file not found: {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        ds, params, records, report = pipeline.run_train(cfg)
    except FileNotFoundError as e:
        print(f"error: missing input file: {e.filename or e}", file=sys.stderr)
        return EXIT_IO
    except CmrmError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    os.makedirs(cfg.out_dir, exist_ok=True)
    pipeline.write_epoch_csv(records, os.path.join(cfg.out_dir, "epochs.csv"))
    pipeline.write_model_json(params, os.path.join(cfg.out_dir, "model.json"))
    pipeline.write_report_json(
        report, echo, cfg.seed, os.path.join(cfg.out_dir, "report.json")
    )
    if ds.num_classes >= 2 and isinstance(cfg.train.cmrm, core.CmrmConfig):
        idx = ds.indices("train")
        P = trainer.predict_proba(params, ds.features[idx])
        margins, _ = core.batch_margins(P, ds.observed_labels[idx])
        pipeline.write_margin_histogram_csv(
            margins, ds.mask[idx], os.path.join(cfg.out_dir, "margin_hist.csv")
        )
    print(f"wrote artifacts to {cfg.out_dir}")
    return EXIT_OK


# --- sweep ---

def _sweep_point(task):
    cfg, lam, alpha, seed = task
    if isinstance(cfg.train.cmrm, core.BinaryCmrmConfig):
        cmrm_cfg = replace(
            cfg.train.cmrm,
            alpha_pos=alpha, alpha_neg=alpha, lambda_pos=lam, lambda_neg=lam,
        )
    else:
        base = cfg.train.cmrm if isinstance(cfg.train.cmrm, core.CmrmConfig) else core.CmrmConfig()
        cmrm_cfg = replace(base, alpha=alpha, lam=lam)
    run_cfg = replace(cfg, train=replace(cfg.train, cmrm=cmrm_cfg, seed=seed))
    _, _, records, report = pipeline.run_train(run_cfg)
    return {
        "lambda": lam,
        "alpha": alpha,
        "seed": seed,
        "val_acc": records[-1].val_acc,
        "val_auroc": records[-1].val_auroc,
        "test_acc": report.accuracy,
        "test_auroc": report.auroc,
    }


def cmd_sweep(args) -> int:
    try:
        cfg, _ = pipeline.load_config(args.config, None, args.out)
    except FileNotFoundError as e:
        print(f"error: config file not found: {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    lam_grid = _values(args.lambda_grid) if args.lambda_grid else list(DEFAULT_GRID)
    alpha_grid = _values(args.alpha_grid) if args.alpha_grid else list(DEFAULT_GRID)
    if args.preset == "gce":
        lam_grid = [0.1 * v for v in lam_grid]
    seeds = _int_values(args.seeds) if args.seeds else [cfg.seed]
    if not lam_grid or not alpha_grid or not seeds:
        print("error: empty sweep grid", file=sys.stderr)
        return EXIT_IO

    tasks = [
        (cfg, lam, alpha, seed)
        for lam in lam_grid
        for alpha in alpha_grid
        for seed in seeds
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]

    os.makedirs(cfg.out_dir, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ("lambda", "alpha", "seed", "val_acc", "val_auroc", "test_acc", "test_auroc")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([pipeline._cell(row[c]) for c in cols])
    pipeline._atomic_write(os.path.join(cfg.out_dir, "sweep_summary.csv"), buf.getvalue())

    # best grid point by mean validation accuracy across seeds
    best = None
    for lam in lam_grid:
        for alpha in alpha_grid:
            accs = [r["val_acc"] for r in rows if r["lambda"] == lam and r["alpha"] == alpha]
            mean_acc = float(np.mean(accs))
            if best is None or mean_acc > best[2]:
                best = (lam, alpha, mean_acc)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda", "alpha", "mean_val_acc"])
    writer.writerow([pipeline._cell(best[0]), pipeline._cell(best[1]), pipeline._cell(best[2])])
    pipeline._atomic_write(os.path.join(cfg.out_dir, "sweep_selection.csv"), buf.getvalue())
    print(f"best lambda={best[0]} alpha={best[1]} mean_val_acc={best[2]:.4f}")
    return EXIT_OK


# --- verify ---

def _run_verifier(name: str, seed: int) -> tuple[dict, bool]:
    if name == "quantile":
        rep = verify.quantile_concentration(
            verify.UNIFORM01, 0.15, (64, 256, 1024), trials=2000, seed=seed
        )
        med = rep.median_errors
        ok = all(a > b for a, b in zip(med, med[1:])) and -0.65 <= rep.decay_exponent <= -0.35
        return {**rep.as_dict(), "passed": ok}, ok
    if name == "dkw":
        rep = verify.dkw_check(verify.UNIFORM01, 200, trials=2000, delta=0.05, seed=seed)
        tol = 0.05 + 3.0 * np.sqrt(0.05 * 0.95 / 2000)
        ok = rep["exceedance_fraction"] <= tol
        return {**rep, "tolerance": float(tol), "passed": ok}, ok
    if name == "gradcheck":
        results = verify.gradcheck_suite(seed, count=20)
        ok = all(err <= 1e-4 for err in results.values())
        return {"max_relative_error": results, "passed": ok}, ok
    if name == "bruteforce":
        rng = substream(seed, "verify")
        worst = 0.0
        for _ in range(100):
            s = int(rng.integers(1, 65))
            K = int(rng.integers(2, 11))
            Z = rng.standard_normal((s, K)) * 2.0
            y = rng.integers(0, K, size=s)
            cfg = core.CmrmConfig(alpha=float(rng.uniform(0.05, 0.5)), temp=1.0)
            fast, _, _, _ = core.cmrm_loss(Z, y, cfg)
            worst = max(worst, float(abs(fast - verify.bruteforce_cmrm(Z, y, cfg))))
        ok = bool(worst <= 1e-10)
        return {"trials": 100, "max_abs_difference": worst, "passed": ok}, ok
    if name == "density":
        rng = substream(seed, "verify")
        m = rng.standard_normal(5000)
        tau, dens = verify.density_at_threshold(m, 0.15)
        from scipy.stats import norm

        ref = float(norm.pdf(norm.ppf(0.15)))
        ok = 0.5 * ref <= dens <= 2.0 * ref
        return {"tau": tau, "density": dens, "reference": ref, "passed": ok}, ok
    if name == "tempgap":
        rng = substream(seed, "verify")
        m = rng.uniform(-1, 1, size=400)
        tau = core.batch_quantile(m, 0.15).tau
        temps = [1.0, 0.3, 0.1, 0.03, 0.01]
        gaps = verify.temp_gap(m, tau, temps)
        ok = gaps[-1] <= gaps[0]
        return {"temps": temps, "gaps": gaps, "passed": ok}, ok
    raise ValueError(name)


def cmd_verify(args) -> int:
    try:
        report, ok = _run_verifier(args.which, args.seed or 0)
    except ValueError:
        print(
            "usage: cmrm verify {quantile|dkw|gradcheck|bruteforce|density|tempgap}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    text = json.dumps(report, indent=2, sort_keys=True, default=float)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        pipeline._atomic_write(os.path.join(args.out, f"verify_{args.which}.json"), text + "\n")
    print(text)
    return EXIT_OK if ok else EXIT_FAIL


# --- inject-noise ---

def cmd_inject_noise(args) -> int:
    try:
        with open(args.input, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        print(f"error: input file not found: {args.input}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        print(f"error: {args.input}: empty file", file=sys.stderr)
        return EXIT_IO
    header, body = rows[0], rows[1:]
    if args.label_column not in header:
        print(f"error: {args.input}: missing label column {args.label_column!r}", file=sys.stderr)
        return EXIT_IO
    li = header.index(args.label_column)
    try:
        labels = np.array([int(r[li]) for r in body])
    except (ValueError, IndexError):
        print(f"error: {args.input}: malformed label column", file=sys.stderr)
        return EXIT_IO
    K = int(labels.max()) + 1 if labels.size else 0
    group_of = None
    if args.kind == noise.GROUP:
        if args.group_size is None:
            print("error: --group-size is required for group noise", file=sys.stderr)
            return EXIT_USAGE
        g = args.group_size
        group_of = lambda label: label // g  # noqa: E731
    try:
        spec = noise.NoiseSpec(kind=args.kind, rate=args.rate, seed=args.seed, group_of=group_of)
        observed, mask = noise.inject(labels, spec, max(K, 2))
    except CmrmError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, row in enumerate(body):
        if mask[i]:
            row = list(row)
            row[li] = str(int(observed[i]))
        writer.writerow(row)
    pipeline._atomic_write(args.output, buf.getvalue())

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row_index", "clean_label", "observed_label"])
    for i in np.flatnonzero(mask):
        writer.writerow([int(i), int(labels[i]), int(observed[i])])
    pipeline._atomic_write(f"{args.output}.mask.csv", buf.getvalue())
    print(f"flipped {int(mask.sum())} of {labels.size} labels")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="cmrm", description="Margin-regularized training under label noise")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="grid search over lambda/alpha/seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--lambda-grid", default=None)
    s.add_argument("--alpha-grid", default=None)
    s.add_argument("--seeds", default=None)
    s.add_argument("--preset", choices=("ce", "gce"), default="ce")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run a statistical verifier")
    v.add_argument("which")
    v.add_argument("--out", default=None)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    n = sub.add_parser("inject-noise", help="corrupt the label column of a CSV")
    n.add_argument("--input", required=True)
    n.add_argument("--output", required=True)
    n.add_argument("--kind", choices=(noise.SYMMETRIC, noise.CIRCULAR, noise.GROUP, noise.BINARY_FLIP), default=noise.SYMMETRIC)
    n.add_argument("--rate", type=float, default=0.2)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--label-column", default="label")
    n.add_argument("--group-size", type=int, default=None)
    n.set_defaults(func=cmd_inject_noise)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
