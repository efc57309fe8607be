import numpy as np
import pytest
from scipy import stats

from lamai.constellation import make_standard
from lamai.detector import (
    DETECTORS,
    cbamp,
    lama_i_detect,
    lama_regular_detect,
    whiten,
    whitened_detect,
    whitening_matrix,
)
from lamai.errors import ConfigurationError, DivergenceError
from lamai.impairment import GaussianTransmitNoise, complex_normal
from lamai.simulation import SystemConfig, sample_batch, sample_realization, trial_rng

# 2x2 BPSK fixture; reference values from scalar tanh formulas
H2 = np.array([[0.6 + 0.2j, -0.3 + 0.5j], [0.1 - 0.4j, 0.7 + 0.1j]])
S2 = np.array([1.0, -1.0])
N2 = np.array([0.05 - 0.02j, -0.03 + 0.04j])
Y2 = H2 @ S2 + N2
Z1 = np.array([0.627 - 0.68j, -0.932 - 0.638j])
XHAT2 = np.array([0.814414093765686, -0.9347237085024703])
TAU2 = 2.3151063631960267
Z2 = np.array([1.062422937596295 - 0.21554525556187595j, -1.2369877368992652 - 0.24290700811767363j])


def _bpsk_cfg():
    return SystemConfig(2, 2, 0.1, make_standard("BPSK"))


class TestHandFixture:
    def test_first_iteration_is_matched_filter(self):
        res = lama_i_detect(Y2, H2, _bpsk_cfg(), tmax=1, record=True)
        np.testing.assert_allclose(res.z_final, Z1, atol=1e-14)
        assert res.tau_trace[0] == 10.0
        np.testing.assert_array_equal(res.s_hat, np.sign(Z1.real))
        assert res.sigma2_postulated == pytest.approx(1.1)

    def test_second_iteration(self):
        res = lama_i_detect(Y2, H2, _bpsk_cfg(), tmax=2, record=True)
        np.testing.assert_allclose(res.x_hat_trace[1], XHAT2, atol=1e-14)
        assert res.tau_trace[1] == pytest.approx(TAU2, rel=1e-13)
        np.testing.assert_allclose(res.z_final, Z2, atol=1e-13)

    def test_onsager_coefficient_regression(self):
        # z^2 without the Onsager term differs by tau2/(1+tau1) H^H y
        res = lama_i_detect(Y2, H2, _bpsk_cfg(), tmax=2)
        plain = XHAT2 + H2.conj().T @ (Y2 - H2 @ XHAT2)
        np.testing.assert_allclose(res.z_final - plain, TAU2 / 11.0 * (H2.conj().T @ Y2), atol=1e-13)


class TestRecursion:
    def test_initial_tau(self, rng):
        cfg = SystemConfig(32, 8, 0.05, impairment=GaussianTransmitNoise(0.1))
        r = sample_realization(cfg, rng)
        res = lama_i_detect(r.y, r.h, cfg, tmax=3)
        assert res.tau_trace[0] == cfg.beta * 1.1 / cfg.n0

    def test_tau_nonnegative_and_decisions_in_set(self, rng):
        cfg = SystemConfig.from_db(64, 16, 8, -10, "16QAM")
        b = sample_batch(cfg, [trial_rng(0, t) for t in range(20)])
        res = lama_i_detect(b.y, b.h, cfg, tmax=10)
        assert np.all(res.tau_trace >= 0)
        assert np.all(np.isin(res.s_hat, cfg.constellation.points))

    def test_noiseless_single_user(self):
        cfg = SystemConfig(64, 1, 1e-6)
        b = sample_batch(cfg, [trial_rng(11, t) for t in range(1000)])
        res = lama_i_detect(b.y, b.h, cfg, tmax=10)
        np.testing.assert_array_equal(res.s_idx, b.s_idx)

    def test_batch_equals_loop(self):
        cfg = SystemConfig.from_db(32, 8, 6, -10)
        b = sample_batch(cfg, [trial_rng(4, t) for t in range(6)])
        res = lama_i_detect(b.y, b.h, cfg, tmax=6)
        for t in range(6):
            one = lama_i_detect(b.y[t], b.h[t], cfg, tmax=6)
            np.testing.assert_array_equal(one.s_idx, res.s_idx[t])
            np.testing.assert_allclose(one.z_final, res.z_final[t], atol=1e-12)

    def test_permutation_equivariance(self, rng):
        cfg = SystemConfig.from_db(64, 12, 5, -10)
        r = sample_realization(cfg, rng)
        perm = rng.permutation(cfg.mt)
        a = lama_i_detect(r.y, r.h, cfg, tmax=8)
        b = lama_i_detect(r.y, r.h[:, perm], cfg, tmax=8)
        np.testing.assert_array_equal(b.s_hat, a.s_hat[perm])
        np.testing.assert_allclose(b.z_final, a.z_final[perm], atol=1e-10)

    def test_regular_equals_lama_i_without_impairment(self):
        cfg = SystemConfig.from_db(32, 8, 4, -np.inf)
        b = sample_batch(cfg, [trial_rng(5, t) for t in range(30)])
        a = lama_i_detect(b.y, b.h, cfg, tmax=10)
        c = lama_regular_detect(b.y, b.h, cfg, tmax=10)
        np.testing.assert_array_equal(a.s_idx, c.s_idx)
        np.testing.assert_array_equal(a.z_final, c.z_final)

    def test_early_stop(self):
        cfg = SystemConfig.from_db(128, 4, 20, -np.inf)
        r = sample_realization(cfg, trial_rng(6, 0))
        res = lama_i_detect(r.y, r.h, cfg, tmax=500)
        assert res.iterations < 500

    def test_divergence_raises(self):
        cfg = SystemConfig(4, 4, 1e-3)
        y = np.array([np.nan, 0, 0, 0], dtype=complex)
        with pytest.raises(DivergenceError) as info:
            lama_i_detect(y, np.eye(4), cfg, tmax=5)
        assert info.value.iteration == 1
        res = lama_i_detect(y, np.eye(4), cfg, tmax=5, raise_on_divergence=False)
        assert res.diverged and res.diverged_at == 1

    def test_shape_checks(self):
        cfg = SystemConfig(4, 2, 0.1)
        with pytest.raises(ConfigurationError):
            lama_i_detect(np.zeros(3), np.zeros((4, 2)), cfg)
        with pytest.raises(ConfigurationError):
            cbamp(np.zeros(4), np.zeros((4, 2)), 0.1, cfg.constellation, 0.0, 0)


class TestDecoupling:
    def test_gaussian_effective_noise(self):
        cfg = SystemConfig.from_db(512, 32, 10, -10)
        b = sample_batch(cfg, [trial_rng(8, t) for t in range(300)])
        res = lama_i_detect(b.y, b.h, cfg, tmax=10)
        w = (res.z_final - b.x).ravel()
        v = np.mean(np.abs(w) ** 2)
        assert v == pytest.approx(np.mean(res.sigma2_postulated), rel=0.05)
        # circular symmetry and normal shape of each real component
        assert np.var(w.real) == pytest.approx(np.var(w.imag), rel=0.05)
        assert abs(np.mean(w.real * w.imag)) < 4 * v / 2 / np.sqrt(w.size)
        k = stats.kurtosis(w.real, fisher=False)
        assert abs(k - 3) < 5 * np.sqrt(24 / w.size)


class TestWhitening:
    def test_matrix_is_inverse_sqrt(self, rng):
        h = complex_normal(rng, (16, 6), 1 / 16)
        w = whitening_matrix(h, 0.1, 0.05)
        q = 0.1 * h @ h.conj().T + 0.05 * np.eye(16)
        np.testing.assert_allclose(w @ q @ w, np.eye(16), atol=1e-10)
        np.testing.assert_allclose(w, w.conj().T, atol=1e-12)

    @pytest.mark.parametrize("shape", [(24, 6), (8, 12), (10, 10)])
    def test_gram_route_matches_full(self, rng, shape):
        h = complex_normal(rng, (3, *shape), 1 / shape[0])
        y = complex_normal(rng, (3, shape[0]))
        y1, h1 = whiten(y, h, 0.1, 0.02, method="full")
        y2, h2 = whiten(y, h, 0.1, 0.02, method="gram")
        np.testing.assert_allclose(y2, y1, atol=1e-10)
        np.testing.assert_allclose(h2, h1, atol=1e-10)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            whiten(np.zeros(2), np.eye(2), 0.1, 0.1, method="cholesky")

    def test_whitened_noise_covariance(self, rng):
        mr, mt, nt, n0 = 64, 8, 0.1, 0.05
        h = complex_normal(rng, (mr, mt), 1 / mr)
        w = whitening_matrix(h, nt, n0)
        draws = 100_000
        v = w @ (complex_normal(rng, (mr, draws), n0) + h @ complex_normal(rng, (mt, draws), nt))
        cov = v @ v.conj().T / draws
        err = np.linalg.norm(cov - np.eye(mr)) / np.linalg.norm(np.eye(mr))
        assert err < 0.05

    def test_no_impairment_is_scalar_rescale(self, rng):
        cfg = SystemConfig.from_db(32, 8, 6, -np.inf)
        b = sample_batch(cfg, [trial_rng(9, t) for t in range(20)])
        wy, wh = whiten(b.y, b.h, 0.0, cfg.n0)
        np.testing.assert_allclose(wy, b.y / np.sqrt(cfg.n0), atol=1e-12)
        a = whitened_detect(b.y, b.h, cfg, tmax=10)
        c = lama_regular_detect(b.y, b.h, cfg, tmax=10)
        np.testing.assert_array_equal(a.s_idx, c.s_idx)
        np.testing.assert_allclose(a.z_final, c.z_final, atol=1e-10)

    def test_registry(self):
        assert set(DETECTORS) == {"lama-i", "lama", "lama-whitened"}
