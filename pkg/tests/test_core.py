import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmrm import core
from cmrm.exceptions import (
    ClassAbsentError,
    ConfigError,
    EmptySampleError,
    LabelError,
)
from cmrm.nets import sigmoid, softmax
from cmrm.rng import substream

from conftest import fd_logit_grad, logits_for_binary_margins


class TestMargin:
    def test_direct_arithmetic(self):
        assert core.margin([0.5, 0.3, 0.2], 0) == pytest.approx(0.2)

    def test_extremes(self):
        assert core.margin([0.0, 1.0, 0.0], 1) == pytest.approx(1.0)
        assert core.margin([0.25, 0.25, 0.25, 0.25], 2) == pytest.approx(0.0)

    def test_negative_margin(self):
        assert core.margin([0.1, 0.6, 0.3], 0) == pytest.approx(-0.5)

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            core.margin([0.5, 0.5], 2)

    @settings(deadline=None, max_examples=50)
    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.data())
    def test_range(self, raw, data):
        p = np.asarray(raw) / np.sum(raw)
        y = data.draw(st.integers(0, p.size - 1))
        assert -1.0 <= core.margin(p, y) <= 1.0


class TestBatchMargins:
    def test_matches_scalar_margin(self):
        rng = substream(2, "verify")
        P = softmax(rng.standard_normal((7, 5)))
        y = rng.integers(0, 5, size=7)
        M, comp = core.batch_margins(P, y)
        for i in range(7):
            assert M[i] == pytest.approx(core.margin(P[i], int(y[i])))
            assert comp[i] != y[i]

    def test_tie_resolves_to_lowest_index(self):
        P = np.array([[0.2, 0.4, 0.4]])
        _, comp = core.batch_margins(P, [0])
        assert comp[0] == 1


class TestBatchQuantile:
    def test_order_statistic_formula(self):
        m = np.arange(0.1, 1.05, 0.1)  # 0.1 .. 1.0
        th = core.batch_quantile(m, 0.2)
        assert th.tau == pytest.approx(0.3)  # k = ceil(0.2 * 11) = 3

    def test_worked_example(self):
        th = core.batch_quantile([0.9, 0.5, -0.2, -0.6], 0.25)
        assert th.tau == pytest.approx(-0.2)  # k = ceil(0.25 * 5) = 2

    def test_small_alpha_gives_minimum(self):
        th = core.batch_quantile([3.0, 1.0, 2.0], 0.2)  # alpha*(s+1) = 0.8 <= 1
        assert th.tau == 1.0

    def test_constant_sample(self):
        th = core.batch_quantile(np.full(9, 0.4), 0.5)
        assert th.tau == 0.4

    def test_empty_rejected(self):
        with pytest.raises(EmptySampleError):
            core.batch_quantile([], 0.2)

    def test_alpha_range_checked(self):
        with pytest.raises(ConfigError):
            core.batch_quantile([1.0], 0.0)

    @settings(deadline=None, max_examples=60)
    @given(
        st.lists(st.floats(-1, 1), min_size=1, max_size=40),
        st.floats(0.01, 0.99),
        st.randoms(),
    )
    def test_membership_permutation_and_coverage(self, raw, alpha, pyrandom):
        m = np.asarray(raw)
        th = core.batch_quantile(m, alpha)
        assert th.tau in m
        shuffled = list(raw)
        pyrandom.shuffle(shuffled)
        assert core.batch_quantile(shuffled, alpha).tau == th.tau
        s = m.size
        below = np.count_nonzero(m < th.tau)
        assert below / s <= np.ceil(alpha * (s + 1)) / s


class TestSoftIndicator:
    def test_midpoint(self):
        assert core.soft_indicator(0.3, 0.3, 1.0) == 0.5

    def test_closed_form(self):
        assert core.soft_indicator(1.0, 0.0, 1.0) == pytest.approx(
            1.0 / (1.0 + np.exp(-1.0))
        )

    def test_hard_limit(self):
        prev = 0.5
        for temp in [1.0, 0.1, 0.01, 0.001]:
            w = core.soft_indicator(0.5, 0.0, temp)
            assert w >= prev
            prev = w
        assert prev > 1.0 - 1e-12

    def test_temp_checked(self):
        with pytest.raises(ConfigError):
            core.soft_indicator(0.0, 0.0, 0.0)

    def test_complement_symmetry(self):
        u = 0.37
        assert core.soft_indicator(u, 0.0, 1.0) + core.soft_indicator(
            -u, 0.0, 1.0
        ) == pytest.approx(1.0)


class TestCmrmLoss:
    def test_worked_example(self):
        target = np.array([0.9, 0.5, -0.2, -0.6])
        Z = logits_for_binary_margins(target)
        y = np.ones(4, dtype=int)
        cfg = core.CmrmConfig(alpha=0.25, temp=1.0)
        loss, w, th, _ = core.cmrm_loss(Z, y, cfg)
        M, _ = core.batch_margins(softmax(Z), y)
        np.testing.assert_allclose(M, target, atol=1e-12)
        assert th.tau == pytest.approx(-0.2, abs=1e-12)
        np.testing.assert_allclose(w, sigmoid(M + 0.2), atol=1e-12)
        assert loss == pytest.approx(float(np.mean(-M * sigmoid(M + 0.2))), abs=1e-12)

    def test_constant_batch(self):
        m = 0.35
        Z = logits_for_binary_margins(np.full(5, m))
        loss, w, th, _ = core.cmrm_loss(Z, np.ones(5, dtype=int), core.CmrmConfig(alpha=0.3))
        assert th.tau == pytest.approx(m, abs=1e-12)
        np.testing.assert_allclose(w, 0.5, atol=1e-12)
        assert loss == pytest.approx(-m / 2.0, abs=1e-12)

    def test_single_sample(self):
        m = -0.4
        Z = logits_for_binary_margins([m])
        loss, w, th, _ = core.cmrm_loss(Z, [1], core.CmrmConfig(alpha=0.5))
        assert th.tau == pytest.approx(m, abs=1e-12)
        assert w[0] == pytest.approx(0.5, abs=1e-12)
        assert loss == pytest.approx(-m / 2.0, abs=1e-12)

    def test_permutation_invariance(self):
        rng = substream(4, "verify")
        Z = rng.standard_normal((9, 4))
        y = rng.integers(0, 4, size=9)
        cfg = core.CmrmConfig(alpha=0.2)
        base = core.cmrm_loss(Z, y, cfg)[0]
        perm = rng.permutation(9)
        assert core.cmrm_loss(Z[perm], y[perm], cfg)[0] == pytest.approx(base, abs=1e-12)

    def test_frozen_threshold_is_constant(self):
        rng = substream(5, "verify")
        Z = rng.standard_normal((6, 3))
        y = rng.integers(0, 3, size=6)
        cfg = core.CmrmConfig(alpha=0.3)
        th = core.batch_quantile(core.batch_margins(softmax(Z), y)[0], cfg.alpha)
        loss, _, th_out, _ = core.cmrm_loss(Z, y, cfg, threshold=th)
        assert th_out is th

    def test_gradient_matches_finite_differences_detached(self):
        # threshold frozen at the base point: the objective the training
        # step actually differentiates
        rng = substream(6, "verify")
        for _ in range(5):
            Z = rng.standard_normal((7, 4))
            y = rng.integers(0, 4, size=7)
            P = softmax(Z)
            # stay away from competing-class ties where the margin is kinked
            ok = True
            for i in range(7):
                rest = np.sort(np.delete(P[i], y[i]))
                if rest.size > 1 and rest[-1] - rest[-2] < 1e-3:
                    ok = False
            if not ok:
                continue
            cfg = core.CmrmConfig(alpha=0.25, temp=0.7)
            _, _, th, analytic = core.cmrm_loss(Z, y, cfg)
            fd = fd_logit_grad(lambda z: core.cmrm_loss(z, y, cfg, threshold=th)[0], Z)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
            assert np.max(np.abs(analytic - fd) / denom) <= 1e-4

    def test_grad_through_threshold_changes_gradient(self):
        rng = substream(8, "verify")
        Z = rng.standard_normal((6, 3))
        y = rng.integers(0, 3, size=6)
        detached = core.cmrm_loss(Z, y, core.CmrmConfig(alpha=0.3))[3]
        attached = core.cmrm_loss(
            Z, y, core.CmrmConfig(alpha=0.3, grad_through_threshold=True)
        )[3]
        assert not np.allclose(detached, attached)

    def test_saturated_weights_give_mean_negative_margin(self):
        rng = substream(9, "verify")
        Z = rng.standard_normal((8, 3))
        y = rng.integers(0, 3, size=8)
        low = core.QuantileThreshold(tau=-10.0, alpha=0.2, sample_size=8)
        cfg = core.CmrmConfig(alpha=0.2, temp=0.05)
        loss, _, _, _ = core.cmrm_loss(Z, y, cfg, threshold=low)
        M, _ = core.batch_margins(softmax(Z), y)
        assert loss == pytest.approx(float(np.mean(-M)), abs=1e-6)

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptySampleError):
            core.cmrm_loss(np.zeros((0, 3)), [], core.CmrmConfig())


class TestBinaryThresholds:
    def test_negative_tail_example(self):
        conf = np.array([0.1, 0.2, 0.3, 0.9, 0.5])
        y = np.array([0, 0, 0, 0, 1])
        th = core.binary_thresholds(conf, y, core.BinaryCmrmConfig(alpha_neg=0.25))
        assert th.tau_neg == pytest.approx(0.3)
        assert th.n_neg == 4

    def test_positive_tail_example(self):
        conf = np.array([0.4, 0.6, 0.8, 0.95, 0.2])
        y = np.array([1, 1, 1, 1, 0])
        th = core.binary_thresholds(conf, y, core.BinaryCmrmConfig(alpha_pos=0.25))
        assert th.tau_pos == pytest.approx(0.6)
        assert th.n_pos == 4

    def test_constant_class(self):
        conf = np.array([0.7, 0.7, 0.7, 0.2])
        y = np.array([0, 0, 0, 1])
        th = core.binary_thresholds(
            conf, y, core.BinaryCmrmConfig(alpha_neg=0.8, alpha_pos=0.5)
        )
        assert th.tau_neg == pytest.approx(0.7)

    def test_class_absent(self):
        with pytest.raises(ClassAbsentError):
            core.binary_thresholds(np.array([0.5, 0.6]), np.array([1, 1]), core.BinaryCmrmConfig())

    def test_monotone_budget(self):
        rng = substream(10, "verify")
        conf = rng.uniform(0, 1, size=30)
        y = (rng.uniform(size=30) < 0.5).astype(int)
        y[0], y[1] = 0, 1
        neg = conf[y == 0]
        prev_above = -1
        for alpha in (0.05, 0.1, 0.2, 0.3, 0.5):
            th = core.binary_thresholds(conf, y, core.BinaryCmrmConfig(alpha_neg=alpha))
            above = int(np.count_nonzero(neg > th.tau_neg))
            assert above >= prev_above
            prev_above = above

    def test_thresholds_are_observed_values(self):
        rng = substream(11, "verify")
        conf = rng.uniform(0, 1, size=20)
        y = np.array([0, 1] * 10)
        th = core.binary_thresholds(conf, y, core.BinaryCmrmConfig())
        assert th.tau_neg in conf[y == 0]
        assert th.tau_pos in conf[y == 1]


class TestBinaryCmrmLoss:
    def test_inactive_hinges(self):
        # negative well below tau_neg, positive well above tau_pos
        Z = np.array([[2.0, -2.0], [-2.0, 2.0]])
        y = np.array([0, 1])
        th = core.BinaryThresholds(tau_pos=0.5, tau_neg=0.5, n_pos=1, n_neg=1)
        loss, grad = core.binary_cmrm_loss(Z, y, th, core.BinaryCmrmConfig())
        assert loss == 0.0
        assert not grad.any()

    def test_single_active_negative(self):
        z = np.log(9.0)  # p1 = 0.9
        Z = np.array([[0.0, z]])
        th = core.BinaryThresholds(tau_pos=0.0, tau_neg=0.3, n_pos=1, n_neg=1)
        cfg = core.BinaryCmrmConfig(lambda_neg=1.0, lambda_pos=1.0)
        loss, _ = core.binary_cmrm_loss(Z, [0], th, cfg)
        assert loss == pytest.approx(-0.6, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = substream(12, "verify")
        Z = rng.standard_normal((8, 2)) * 2.0
        y = np.array([0, 1] * 4)
        cfg = core.BinaryCmrmConfig()
        # freeze thresholds away from every sample so no hinge kink is hit
        th = core.BinaryThresholds(tau_pos=0.41234, tau_neg=0.587, n_pos=4, n_neg=4)
        p1 = core.positive_confidence(Z)
        assert min(np.abs(p1 - th.tau_pos).min(), np.abs(p1 - th.tau_neg).min()) > 1e-2
        _, analytic = core.binary_cmrm_loss(Z, y, th, cfg)
        fd = fd_logit_grad(lambda z: core.binary_cmrm_loss(z, y, th, cfg)[0], Z)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
        assert np.max(np.abs(analytic - fd) / denom) <= 1e-4


class TestPositiveConfidence:
    def test_matches_two_class_softmax(self):
        rng = substream(13, "verify")
        Z = rng.standard_normal((10, 2))
        np.testing.assert_allclose(
            core.positive_confidence(Z), softmax(Z)[:, 1], atol=1e-12
        )

    def test_requires_two_logits(self):
        with pytest.raises(ConfigError):
            core.positive_confidence(np.zeros((2, 3)))


class TestConfigValidation:
    def test_cmrm_config(self):
        with pytest.raises(ConfigError):
            core.CmrmConfig(alpha=0.0)
        with pytest.raises(ConfigError):
            core.CmrmConfig(lam=-0.1)
        with pytest.raises(ConfigError):
            core.CmrmConfig(temp=0.0)

    def test_binary_config(self):
        with pytest.raises(ConfigError):
            core.BinaryCmrmConfig(alpha_pos=1.0)
        with pytest.raises(ConfigError):
            core.BinaryCmrmConfig(lambda_neg=-1.0)
