"""Independent oracles and statistical verifiers.

Everything here is deliberately written the slow, obvious way (explicit
loops, counting instead of sorting) so it can stand as an independent
check on the optimized training-path implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import core, losses, metrics, nets
from .exceptions import ConfigError
from .rng import substream

UNIFORM01 = "uniform01"
STD_NORMAL = "std_normal"
BETA = "beta"


@dataclass
class ConcentrationReport:
    batch_sizes: list[int]
    median_errors: list[float]
    p95_errors: list[float]
    decay_exponent: float
    population_quantile: float

    def as_dict(self) -> dict:
        return {
            "batch_sizes": self.batch_sizes,
            "median_errors": self.median_errors,
            "p95_errors": self.p95_errors,
            "decay_exponent": self.decay_exponent,
            "population_quantile": self.population_quantile,
        }


def _distribution(name: str, a: float = 2.0, b: float = 5.0):
    if name == UNIFORM01:
        return stats.uniform(0.0, 1.0)
    if name == STD_NORMAL:
        return stats.norm()
    if name == BETA:
        return stats.beta(a, b)
    raise ConfigError(f"unsupported distribution: {name!r}")


def quantile_concentration(
    distribution: str,
    alpha: float,
    batch_sizes,
    trials: int = 2000,
    seed: int = 0,
    beta_a: float = 2.0,
    beta_b: float = 5.0,
) -> ConcentrationReport:
    """Monte Carlo check that the batch quantile converges to the
    population quantile roughly like 1/sqrt(s)."""
    if trials < 100:
        raise ConfigError("need at least 100 trials")
    sizes = sorted(int(s) for s in batch_sizes)
    if any(s < 8 for s in sizes):
        raise ConfigError("batch sizes must be >= 8")
    dist = _distribution(distribution, beta_a, beta_b)
    tau = float(dist.ppf(alpha))
    rng = substream(seed, "verify")
    medians, p95s = [], []
    for s in sizes:
        errs = np.empty(trials)
        for t in range(trials):
            sample = dist.rvs(size=s, random_state=rng)
            errs[t] = abs(core.batch_quantile(sample, alpha).tau - tau)
        medians.append(float(np.median(errs)))
        p95s.append(float(np.percentile(errs, 95)))
    slope = float(
        np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(medians)), 1)[0]
    )
    return ConcentrationReport(
        batch_sizes=sizes,
        median_errors=medians,
        p95_errors=p95s,
        decay_exponent=slope,
        population_quantile=tau,
    )


def dkw_check(
    distribution: str,
    sample_size: int,
    trials: int = 2000,
    delta: float = 0.05,
    seed: int = 0,
) -> dict:
    """Fraction of trials where the ECDF sup-gap exceeds the DKW radius."""
    if trials < 100:
        raise ConfigError("need at least 100 trials")
    dist = _distribution(distribution)
    rng = substream(seed, "verify")
    s = int(sample_size)
    radius = np.sqrt(np.log(2.0 / delta) / (2.0 * s))
    exceed = 0
    sup_gaps = np.empty(trials)
    for t in range(trials):
        x = np.sort(dist.rvs(size=s, random_state=rng))
        cdf = dist.cdf(x)
        # sup gap of a step ECDF occurs at the sample points
        upper = np.abs(np.arange(1, s + 1) / s - cdf)
        lower = np.abs(cdf - np.arange(0, s) / s)
        sup_gaps[t] = max(upper.max(), lower.max())
        if sup_gaps[t] > radius:
            exceed += 1
    return {
        "distribution": distribution,
        "sample_size": s,
        "trials": trials,
        "delta": delta,
        "radius": float(radius),
        "exceedance_fraction": exceed / trials,
        "median_sup_gap": float(np.median(sup_gaps)),
    }


def temp_gap(margins, tau: float, temps) -> list[float]:
    """|hard-thresholded loss - soft-weighted loss| at each temperature."""
    m = np.asarray(margins, dtype=np.float64)
    gaps = []
    hard = float(np.mean(-m * (m >= tau)))
    for temp in temps:
        soft = float(np.mean(-m * core.soft_indicator(m, tau, temp)))
        gaps.append(abs(hard - soft))
    return gaps


def bruteforce_cmrm(logits, labels, cfg: core.CmrmConfig) -> float:
    """Scalar re-derivation of the margin-risk loss: counting quantile,
    explicit per-sample loops, no shared code with the training path."""
    Z = np.asarray(logits, dtype=np.float64)
    s, K = Z.shape
    margins = []
    for i in range(s):
        row = Z[i] - max(Z[i])
        e = [float(np.exp(v)) for v in row]
        total = sum(e)
        probs = [v / total for v in e]
        yi = int(labels[i])
        best_other = max(p for j, p in enumerate(probs) if j != yi)
        margins.append(probs[yi] - best_other)
    # k-th smallest by counting, no sort
    k = min(int(np.ceil(cfg.alpha * (s + 1))), s)
    tau = None
    for cand in margins:
        below = sum(1 for m in margins if m < cand)
        at_or_below = sum(1 for m in margins if m <= cand)
        if below < k <= at_or_below:
            tau = cand
            break
    assert tau is not None
    loss = 0.0
    for m in margins:
        w = 1.0 / (1.0 + np.exp(-(m - tau) / cfg.temp))
        loss += -m * w
    return loss / s


def grad_check(params: nets.ModelParams, X, y, objective, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``objective(params) -> (loss, parameter gradients)``; the analytic
    gradient structure must match params.layers.
    """
    if params.num_params() > 500:
        raise ConfigError("grad_check is meant for small instances")
    _, analytic = objective(params)
    flat_analytic = np.concatenate([g.ravel() for gW, gb in analytic for g in (gW, gb)])
    theta = params.flatten()
    fd = np.empty_like(theta)
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[j] += step
        dn[j] -= step
        lu, _ = objective(params.with_flat(up))
        ld, _ = objective(params.with_flat(dn))
        fd[j] = (lu - ld) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(flat_analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(flat_analytic - fd) / denom))


def density_at_threshold(margins, alpha: float) -> tuple[float, float]:
    """Full-sample quantile threshold and the KDE density value there."""
    m = np.asarray(margins, dtype=np.float64)
    if m.size < 50:
        raise ConfigError("need at least 50 margins")
    tau = core.batch_quantile(m, alpha).tau
    bw = metrics.silverman_bandwidth(m)
    z = (tau - m) / bw
    dens = float(np.exp(-0.5 * z**2).sum() / (m.size * bw * np.sqrt(2.0 * np.pi)))
    return tau, dens


def _gap_midpoint(values: np.ndarray, target: float, min_width: float = 1e-2) -> float:
    """Midpoint of the gap of [0, 1] \\ values containing ``target``, or of
    the widest gap if that one is too narrow for finite differencing."""
    pts = np.concatenate(([0.0], np.sort(np.unique(values)), [1.0]))
    widths = np.diff(pts)
    j = int(np.searchsorted(pts, target, side="right")) - 1
    j = min(max(j, 0), widths.size - 1)
    if widths[j] < min_width:
        j = int(np.argmax(widths))
    return float((pts[j] + pts[j + 1]) / 2.0)


# Objective families covered by the gradient-check suite: every base loss
# alone, plus the margin regularizer composites used in training.
GRADCHECK_FAMILIES = (
    ("ce", None),
    ("focal", None),
    ("gce", None),
    ("ldam", None),
    ("hinge", None),
    ("ce", "multiclass"),
    ("hinge", "binary"),
    ("ce", "binary"),
)


def _kink_safe(params, X, y, base_kind, cmrm_cfg, thresholds) -> bool:
    """True when the instance sits a safe distance from every point where
    the objective is non-differentiable: ReLU preactivations at zero, ties
    in the competing-class max, hinge kinks, and the frozen binary
    thresholds.  Central differences are undefined at those points, so the
    generator resamples instead of checking a subgradient against them."""
    Z = nets.forward(params, X)
    if params.kind == nets.MLP:
        pre = X @ params.layers[0][0] + params.layers[0][1]
        if np.abs(pre).min() < 1e-2:
            return False
    if base_kind == "hinge":
        a = np.where(np.asarray(y) == 1, 1.0, -1.0)
        if np.abs(1.0 - a * Z[:, 1]).min() < 1e-2:
            return False
    if isinstance(cmrm_cfg, core.BinaryCmrmConfig):
        p1 = core.positive_confidence(Z)
        gap = min(
            np.abs(p1 - thresholds.tau_pos).min(),
            np.abs(p1 - thresholds.tau_neg).min(),
        )
        if gap < 1e-2:
            return False
    needs_margin = isinstance(cmrm_cfg, core.CmrmConfig) or (
        cmrm_cfg is None and base_kind != "hinge"
    )
    if needs_margin:
        P = nets.softmax(Z)
        for i in range(P.shape[0]):
            rest = np.sort(np.delete(P[i], int(y[i])))
            if rest.size > 1 and rest[-1] - rest[-2] < 1e-3:
                return False
    return True


def _fd_resolvable(objective, params: nets.ModelParams, step: float = 1e-4,
                   floor: float = 1e-10) -> bool:
    """Reject instances with a coordinate whose analytic derivative is
    (essentially) zero while the loss value still jitters at rounding
    level under perturbation — e.g. two active hinge terms with opposite
    unit slopes cancelling exactly.  The objective really is flat there,
    but a finite difference of two nearly-equal O(1) losses returns pure
    rounding noise that a relative comparison then amplifies."""
    _, analytic = objective(params)
    flat = np.concatenate([g.ravel() for gW, gb in analytic for g in (gW, gb)])
    theta = params.flatten()
    for j in np.where(np.abs(flat) < floor)[0]:
        up, dn = theta.copy(), theta.copy()
        up[j] += step
        dn[j] -= step
        lu, _ = objective(params.with_flat(up))
        ld, _ = objective(params.with_flat(dn))
        if lu != ld:
            return False
    return True


def gradcheck_instances(base_kind: str, cmrm_kind: str | None, rng,
                        count: int = 20, dim: int = 5, samples: int = 8,
                        hidden: int = 6):
    """Yield ``(params, X, y, objective)`` gradient-check instances,
    alternating two-layer and linear models, resampled until every one is
    differentiable at the evaluation point and resolvable by central
    differences (see _kink_safe and _fd_resolvable)."""
    K = 2 if cmrm_kind == "binary" or base_kind == "hinge" else 4
    made = 0
    n = 0
    while made < count:
        X = rng.standard_normal((samples, dim))
        y = rng.integers(0, K, size=samples)
        n += 1
        if n > 200 * count:
            raise ConfigError("could not sample enough differentiable instances")
        if np.unique(y).size < K:
            continue
        arch = nets.MLP if made % 2 == 0 else nets.LINEAR
        params = nets.init_params(arch, dim, K, rng, hidden=hidden)
        if cmrm_kind == "multiclass":
            cfg = core.CmrmConfig(alpha=0.2, lam=0.15)
        elif cmrm_kind == "binary":
            cfg = core.BinaryCmrmConfig()
        else:
            cfg = None
        thresholds = None
        if isinstance(cfg, core.BinaryCmrmConfig):
            p1 = core.positive_confidence(nets.forward(params, X))
            raw = core.binary_thresholds(p1, y, cfg)
            thresholds = core.BinaryThresholds(
                tau_pos=_gap_midpoint(p1, raw.tau_pos),
                tau_neg=_gap_midpoint(p1, raw.tau_neg),
                n_pos=raw.n_pos,
                n_neg=raw.n_neg,
            )
        if not _kink_safe(params, X, y, base_kind, cfg, thresholds):
            continue
        counts = None
        if base_kind == "ldam":
            counts = tuple(int(c) for c in np.bincount(y, minlength=K))
        base = losses.BaseLossSpec(base_kind, class_counts=counts)
        objective = objective_for(base, cfg, X, y, base_params=params)
        if not _fd_resolvable(objective, params):
            continue
        yield params, X, y, objective
        made += 1


def gradcheck_suite(seed: int, count: int = 20) -> dict[str, float]:
    """Worst relative gradient error per objective family over ``count``
    random small instances each."""
    results = {}
    for base_kind, cmrm_kind in GRADCHECK_FAMILIES:
        rng = substream(seed, "verify")
        worst = 0.0
        for params, X, y, objective in gradcheck_instances(
            base_kind, cmrm_kind, rng, count=count
        ):
            worst = max(worst, grad_check(params, X, y, objective))
        name = base_kind if cmrm_kind is None else f"{base_kind}+{cmrm_kind}"
        results[name] = worst
    return results


def objective_for(
    base: losses.BaseLossSpec,
    cmrm_cfg: core.CmrmConfig | core.BinaryCmrmConfig | None,
    X,
    y,
    base_params: nets.ModelParams | None = None,
):
    """Build an objective(params) -> (loss, param grads) closure matching
    one training step's total loss on a fixed batch.

    The quantile thresholds are frozen at ``base_params`` so the closure is
    the detached objective the training step actually differentiates; pass
    ``base_params=None`` to freeze at each evaluation point instead.
    """
    frozen_th = None
    frozen_bin_th = None
    if base_params is not None and cmrm_cfg is not None:
        Z0 = nets.forward(base_params, X)
        if isinstance(cmrm_cfg, core.CmrmConfig):
            _, _, frozen_th, _ = core.cmrm_loss(Z0, y, cmrm_cfg)
        else:
            th = core.binary_thresholds(core.positive_confidence(Z0), y, cmrm_cfg)
            # The raw thresholds coincide with observed confidences, which
            # parks one sample exactly on a hinge kink where finite
            # differences are undefined; move each into a wide gap between
            # observed values.
            p1 = core.positive_confidence(Z0)
            frozen_bin_th = core.BinaryThresholds(
                tau_pos=_gap_midpoint(p1, th.tau_pos),
                tau_neg=_gap_midpoint(p1, th.tau_neg),
                n_pos=th.n_pos,
                n_neg=th.n_neg,
            )

    def objective(params: nets.ModelParams):
        Z = nets.forward(params, X)
        loss, grad = losses.loss_and_logit_grad(base, Z, y)
        if isinstance(cmrm_cfg, core.CmrmConfig):
            cr, _, _, cr_grad = core.cmrm_loss(Z, y, cmrm_cfg, threshold=frozen_th)
            loss = loss + cmrm_cfg.lam * cr
            grad = grad + cmrm_cfg.lam * cr_grad
        elif isinstance(cmrm_cfg, core.BinaryCmrmConfig):
            th = frozen_bin_th
            if th is None:
                th = core.binary_thresholds(core.positive_confidence(Z), y, cmrm_cfg)
            cr, cr_grad = core.binary_cmrm_loss(Z, y, th, cmrm_cfg)
            loss = loss + cr
            grad = grad + cr_grad
        return loss, nets.backward(params, X, grad)

    return objective
