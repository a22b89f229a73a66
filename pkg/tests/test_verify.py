import numpy as np
import pytest
from scipy import stats

from cmrm import core, losses, nets, verify
from cmrm.exceptions import ConfigError
from cmrm.rng import substream


class TestQuantileConcentration:
    def test_uniform_alpha_known_quantile(self):
        rep = verify.quantile_concentration(
            verify.UNIFORM01, 0.3, [16, 64, 256], trials=400, seed=0
        )
        assert rep.population_quantile == pytest.approx(0.3)
        assert rep.median_errors[0] > rep.median_errors[-1]
        # roughly 1/sqrt(s) decay
        assert -0.8 < rep.decay_exponent < -0.2

    def test_validation(self):
        with pytest.raises(ConfigError):
            verify.quantile_concentration(verify.UNIFORM01, 0.2, [16], trials=10)
        with pytest.raises(ConfigError):
            verify.quantile_concentration(verify.UNIFORM01, 0.2, [4], trials=200)
        with pytest.raises(ConfigError):
            verify.quantile_concentration("cauchy", 0.2, [16], trials=200)


class TestDkwCheck:
    def test_exceedance_bounded(self):
        out = verify.dkw_check(verify.STD_NORMAL, 64, trials=400, delta=0.05, seed=1)
        assert out["exceedance_fraction"] <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / 400)
        assert out["radius"] == pytest.approx(np.sqrt(np.log(2 / 0.05) / 128))

    def test_median_gap_matches_ks_scale(self):
        # the ECDF sup gap over n samples concentrates around ~0.8/sqrt(n)
        out = verify.dkw_check(verify.UNIFORM01, 100, trials=400, seed=2)
        assert 0.04 < out["median_sup_gap"] < 0.13


class TestTempGap:
    def test_gap_shrinks_with_temperature(self):
        rng = substream(3, "verify")
        m = rng.uniform(-1, 1, size=200)
        gaps = verify.temp_gap(m, 0.0, [1.0, 0.3, 0.1, 0.03, 0.01])
        assert all(a >= b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.02


class TestBruteforceOracle:
    def test_matches_training_path(self):
        rng = substream(4, "verify")
        cfg = core.CmrmConfig(alpha=0.25, temp=0.7)
        for _ in range(50):
            s = int(rng.integers(2, 12))
            K = int(rng.integers(2, 6))
            Z = rng.standard_normal((s, K)) * 2.0
            y = rng.integers(0, K, size=s)
            fast = core.cmrm_loss(Z, y, cfg)[0]
            slow = verify.bruteforce_cmrm(Z, y, cfg)
            assert abs(fast - slow) <= 1e-10


class TestGradCheck:
    def test_accepts_correct_gradient(self):
        rng = substream(5, "verify")
        params = nets.init_params(nets.LINEAR, 3, 2, rng)
        X = rng.standard_normal((4, 3))
        y = np.array([0, 1, 0, 1])
        obj = verify.objective_for(losses.BaseLossSpec("ce"), None, X, y)
        assert verify.grad_check(params, X, y, obj) <= 1e-4

    def test_flags_wrong_gradient(self):
        rng = substream(6, "verify")
        params = nets.init_params(nets.LINEAR, 3, 2, rng)
        X = rng.standard_normal((4, 3))
        y = np.array([0, 1, 0, 1])
        good = verify.objective_for(losses.BaseLossSpec("ce"), None, X, y)

        def bad(p):
            loss, grads = good(p)
            return loss, [(1.5 * gW, gb) for gW, gb in grads]

        assert verify.grad_check(params, X, y, bad) > 1e-2

    def test_rejects_large_instances(self):
        rng = substream(7, "verify")
        params = nets.init_params(nets.MLP, 50, 10, rng, hidden=100)
        with pytest.raises(ConfigError):
            verify.grad_check(params, None, None, lambda p: (0.0, []))


class TestGradcheckSuite:
    def test_all_families_pass(self):
        results = verify.gradcheck_suite(seed=0, count=6)
        assert set(results) == {
            "ce", "focal", "gce", "ldam", "hinge",
            "ce+multiclass", "hinge+binary", "ce+binary",
        }
        for name, err in results.items():
            assert err <= 1e-4, f"{name}: {err:.3e}"


class TestDensityAtThreshold:
    def test_known_density(self):
        rng = substream(8, "verify")
        m = rng.normal(0.0, 0.25, size=4000)
        tau, dens = verify.density_at_threshold(m, 0.1)
        expected_tau = stats.norm(0, 0.25).ppf(0.1)
        assert tau == pytest.approx(expected_tau, abs=0.03)
        assert dens == pytest.approx(stats.norm(0, 0.25).pdf(tau), rel=0.15)

    def test_minimum_sample_size(self):
        with pytest.raises(ConfigError):
            verify.density_at_threshold(np.zeros(10), 0.2)


class TestGapMidpoint:
    def test_midpoint_of_containing_gap(self):
        vals = np.array([0.2, 0.6])
        assert verify._gap_midpoint(vals, 0.3) == pytest.approx(0.4)
        assert verify._gap_midpoint(vals, 0.1) == pytest.approx(0.1)

    def test_narrow_gap_falls_back_to_widest(self):
        vals = np.array([0.5, 0.504])
        # the gap containing the target is too narrow; the widest is [0, 0.5]
        assert verify._gap_midpoint(vals, 0.502, min_width=1e-2) == pytest.approx(0.25)
