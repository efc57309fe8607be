import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lamai.errors import ConfigurationError
from lamai.impairment import GaussianTransmitNoise
from lamai.simulation import (
    SystemConfig,
    evm_to_nt,
    n0_to_snr,
    nt_to_evm,
    sample_batch,
    sample_realization,
    snr_to_n0,
    trial_rng,
)


class TestConversions:
    @pytest.mark.parametrize(
        "snr,beta,expected", [(10, 8 / 128, 0.00625), (0, 1.0, 1.0), (20, 1.0, 0.01)]
    )
    def test_snr_to_n0(self, snr, beta, expected):
        assert snr_to_n0(snr, beta) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("evm,es,expected", [(-10, 1.0, 0.1), (-math.inf, 1.0, 0.0), (0, 2.0, 2.0)])
    def test_evm_to_nt(self, evm, es, expected):
        assert evm_to_nt(evm, es) == pytest.approx(expected, rel=1e-12)

    @given(st.floats(-40, 60), st.floats(1e-3, 10), st.floats(0.1, 10))
    def test_snr_round_trip(self, snr, beta, es):
        assert n0_to_snr(snr_to_n0(snr, beta, es), beta, es) == pytest.approx(snr, abs=1e-12)

    @given(st.floats(-60, 10), st.floats(0.1, 10))
    def test_evm_round_trip(self, evm, es):
        assert nt_to_evm(evm_to_nt(evm, es), es) == pytest.approx(evm, abs=1e-12)

    def test_zero_nt_is_minus_inf(self):
        assert nt_to_evm(0.0) == -math.inf


class TestSystemConfig:
    def test_from_db(self):
        cfg = SystemConfig.from_db(128, 8, 10.0, -10.0)
        assert cfg.beta == 0.0625
        assert cfg.n0 == pytest.approx(0.00625)
        assert cfg.n_t == pytest.approx(0.1)

    @pytest.mark.parametrize("mr,mt,n0", [(0, 4, 0.1), (4, 0, 0.1), (4, 4, 0.0), (4, 4, math.nan)])
    def test_invalid(self, mr, mt, n0):
        with pytest.raises(ConfigurationError):
            SystemConfig(mr, mt, n0)


class TestRealization:
    def test_composition(self, rng):
        cfg = SystemConfig(16, 4, 0.1, impairment=GaussianTransmitNoise(0.1))
        r = sample_realization(cfg, rng)
        assert r.h.shape == (16, 4) and r.y.shape == (16,)
        np.testing.assert_array_equal(r.x, r.s + r.e)
        np.testing.assert_array_equal(r.y, r.h @ r.x + r.n)
        np.testing.assert_array_equal(r.s, cfg.constellation.points[r.s_idx])

    def test_unimpaired(self, rng):
        r = sample_realization(SystemConfig(8, 4, 0.1), rng)
        np.testing.assert_array_equal(r.x, r.s)

    def test_channel_variance(self):
        cfg = SystemConfig(128, 128, 0.1)
        p = np.concatenate([np.abs(sample_realization(cfg, trial_rng(1, t)).h.ravel()) ** 2 for t in range(100)])
        assert abs(p.mean() - 1 / 128) < 3 * p.std() / np.sqrt(p.size)

    def test_receive_power(self):
        cfg = SystemConfig(64, 16, 0.2)
        p = np.array([np.sum(np.abs(sample_realization(cfg, trial_rng(2, t)).y) ** 2) / cfg.mr
                      for t in range(4000)])
        assert abs(p.mean() - (cfg.beta + cfg.n0)) < 3 * p.std() / np.sqrt(p.size)

    def test_column_energy_concentrates(self):
        cfg = SystemConfig(128, 8, 0.1)
        norms = np.concatenate([np.sum(np.abs(sample_realization(cfg, trial_rng(3, t)).h) ** 2, axis=0)
                                for t in range(500)])
        assert abs(norms.mean() - 1) < 5 * norms.std() / np.sqrt(norms.size)
        assert norms.std() == pytest.approx(1 / np.sqrt(128), rel=0.1)

    def test_deterministic(self):
        cfg = SystemConfig(8, 2, 0.1, impairment=GaussianTransmitNoise(0.1))
        a = sample_realization(cfg, trial_rng(7, 0, 5))
        b = sample_realization(cfg, trial_rng(7, 0, 5))
        c = sample_realization(cfg, trial_rng(7, 0, 6))
        np.testing.assert_array_equal(a.y, b.y)
        assert not np.array_equal(a.y, c.y)

    def test_batch_stacks(self):
        cfg = SystemConfig(8, 2, 0.1)
        rngs = [trial_rng(0, 0, t) for t in range(5)]
        b = sample_batch(cfg, rngs)
        assert b.h.shape == (5, 8, 2) and b.s_idx.shape == (5, 2)
        np.testing.assert_array_equal(b.y[3], sample_realization(cfg, trial_rng(0, 0, 3)).y)
