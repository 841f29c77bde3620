import numpy as np
import pytest

from mpslam.model import (
    MT_B,
    MT_O,
    MT_PX,
    MT_PY,
    MT_VX,
    MT_VY,
    EngineConfig,
    ParticleBelief,
    PvaHypothesis,
    inter_mt_transition,
    predict_bias_bs,
    predict_mt,
    predict_pva,
    resample,
)


def _mt_belief(n=100, v=(0.0, 0.0), rng=None):
    rng = rng or np.random.default_rng(0)
    p = np.zeros((n, 6))
    p[:, MT_PX:MT_PY + 1] = rng.normal(size=(n, 2))
    p[:, MT_VX] = v[0]
    p[:, MT_VY] = v[1]
    return ParticleBelief.from_samples(p)


class TestParticleBelief:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            ParticleBelief(np.zeros((3, 2)), np.array([0.5, 0.5, 0.5]))
        with pytest.raises(ValueError):
            ParticleBelief(np.zeros((2, 2)), np.array([1.5, -0.5]))

    def test_mean_and_ess(self):
        b = ParticleBelief(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
        assert b.mean() == pytest.approx(1.0)
        assert b.ess() == pytest.approx(2.0)

    def test_systematic_resample_preserves_mass(self):
        rng = np.random.default_rng(1)
        particles = np.arange(10.0)
        w = rng.random(10)
        w /= w.sum()
        b = ParticleBelief(particles, w)
        r = resample(b, rng, n=100_000)
        assert r.mean() == pytest.approx(b.mean(), abs=0.02)
        assert np.allclose(r.weights, 1e-5)


class TestPredictMt:
    def test_deterministic_shift(self):
        cfg = EngineConfig(sigma_accel=0.0, sigma_orient=0.0, sigma_bias_mt=0.0)
        b = _mt_belief(v=(1.0, 0.0))
        out = predict_mt(b, 1.0, cfg, np.random.default_rng(0))
        np.testing.assert_allclose(out.particles[:, MT_PX], b.particles[:, MT_PX] + 1.0)
        np.testing.assert_allclose(out.particles[:, MT_PY], b.particles[:, MT_PY])

    def test_zero_velocity_zero_noise_identity(self):
        cfg = EngineConfig(sigma_accel=0.0, sigma_orient=0.0, sigma_bias_mt=0.0)
        b = _mt_belief()
        out = predict_mt(b, 1.0, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(out.particles, b.particles)
        np.testing.assert_array_equal(out.weights, b.weights)

    def test_monte_carlo_mean_drift(self):
        cfg = EngineConfig(sigma_accel=0.3, sigma_orient=0.1, sigma_bias_mt=0.05)
        b = _mt_belief(n=100_000, v=(0.7, -0.2))
        out = predict_mt(b, 1.0, cfg, np.random.default_rng(7))
        shift = out.particles[:, :2] - b.particles[:, :2]
        # E[shift] = v*dt, tolerance ~3 sigma_a dt^2 / sqrt(P)
        tol = 3 * cfg.sigma_accel / np.sqrt(len(b.particles))
        np.testing.assert_allclose(shift.mean(axis=0), [0.7, -0.2], atol=3 * tol)

    def test_weights_and_count_preserved(self):
        cfg = EngineConfig()
        w = np.random.default_rng(2).random(50)
        w /= w.sum()
        b = ParticleBelief(np.zeros((50, 6)), w)
        out = predict_mt(b, 0.5, cfg, np.random.default_rng(3))
        np.testing.assert_array_equal(out.weights, w)
        assert out.count == 50

    def test_orientation_stays_wrapped(self):
        cfg = EngineConfig(sigma_orient=3.0)
        b = _mt_belief(n=2000)
        out = predict_mt(b, 1.0, cfg, np.random.default_rng(5))
        assert np.all(out.particles[:, MT_O] >= -np.pi)
        assert np.all(out.particles[:, MT_O] < np.pi)


class TestPredictBias:
    def test_zero_sigma_identity(self):
        cfg = EngineConfig(sigma_bias_bs=0.0)
        b = ParticleBelief.from_samples(np.linspace(-1, 1, 200))
        out = predict_bias_bs(b, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(out.particles, b.particles)

    def test_variance_grows_by_sigma_squared(self):
        cfg = EngineConfig(sigma_bias_bs=0.2)
        b = ParticleBelief.from_samples(np.zeros(200_000))
        out = predict_bias_bs(b, cfg, np.random.default_rng(1))
        assert np.var(out.particles) == pytest.approx(0.04, rel=0.02)

    def test_weights_preserved(self):
        cfg = EngineConfig()
        w = np.array([0.25, 0.75])
        b = ParticleBelief(np.array([0.0, 1.0]), w)
        out = predict_bias_bs(b, cfg, np.random.default_rng(2))
        np.testing.assert_array_equal(out.weights, w)


class TestPredictPva:
    def _hyp(self, existence=1.0):
        belief = ParticleBelief.from_samples(np.random.default_rng(0).normal(size=(64, 2)))
        return PvaHypothesis(key=1, bs_index=1, belief=belief, existence=existence)

    def test_survival_product(self):
        cfg = EngineConfig(p_s=0.99)
        assert predict_pva(self._hyp(1.0), cfg).existence == pytest.approx(0.99)

    def test_nonexistent_stays_nonexistent(self):
        cfg = EngineConfig(p_s=0.99)
        assert predict_pva(self._hyp(0.0), cfg).existence == 0.0

    def test_positions_untouched(self):
        cfg = EngineConfig()
        h = self._hyp(0.5)
        out = predict_pva(h, cfg)
        np.testing.assert_array_equal(out.belief.particles, h.belief.particles)

    def test_repeated_application_multiplicative(self):
        cfg = EngineConfig(p_s=0.9)
        h = self._hyp(0.8)
        for _ in range(5):
            h = predict_pva(h, cfg)
        assert h.existence == pytest.approx(0.8 * 0.9**5)


class TestInterMtTransition:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_identity(self, seed):
        rng = np.random.default_rng(seed)
        belief = ParticleBelief.from_samples(rng.normal(size=(32, 2)))
        h = PvaHypothesis(key=seed, bs_index=2, belief=belief, existence=rng.random())
        out = inter_mt_transition(h)
        assert out is h


class TestEngineConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            EngineConfig(p_d=0.0)
        with pytest.raises(ValueError):
            EngineConfig(p_pr=0.6, p_cf=0.5)
        with pytest.raises(ValueError):
            EngineConfig(mu_fp=0.0)
        with pytest.raises(ValueError):
            EngineConfig(coupling="bogus")
