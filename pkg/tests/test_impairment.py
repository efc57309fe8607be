import numpy as np
import pytest
from scipy import integrate

from lamai.constellation import Constellation, make_standard
from lamai.errors import ConfigurationError, DegeneratePriorError
from lamai.impairment import (
    GaussianTransmitNoise,
    complex_normal,
    effective_prior_pdf,
    effective_variance,
    sample_impairment,
)


class TestGaussianTransmitNoise:
    def test_zero_variance_gives_zero(self, rng):
        e = sample_impairment(np.ones(17), GaussianTransmitNoise(0.0), rng)
        np.testing.assert_array_equal(e, 0)

    def test_second_moment(self, rng):
        e = sample_impairment(np.zeros(10**6), GaussianTransmitNoise(0.1), rng)
        p = np.abs(e) ** 2
        assert abs(p.mean() - 0.1) < 3 * p.std() / np.sqrt(p.size)

    def test_circular(self, rng):
        e = complex_normal(rng, 10**6, 0.4)
        np.testing.assert_allclose([e.real.var(), e.imag.var()], 0.2, rtol=1e-2)
        assert abs(np.mean(e.real * e.imag)) < 3 * 0.2 / 1e3

    def test_evm(self):
        assert GaussianTransmitNoise.from_evm_db(-10).n_t == pytest.approx(0.1)
        assert GaussianTransmitNoise.from_evm_db(-np.inf).n_t == 0.0

    def test_negative_variance(self):
        with pytest.raises(ConfigurationError):
            GaussianTransmitNoise(-0.1)

    def test_independent_of_symbols(self, rng):
        c = make_standard("QPSK")
        s = c.sample(10**6, rng)
        e = GaussianTransmitNoise(0.1).sample(s, rng)
        r = np.corrcoef(e.real, s.real)[0, 1]
        assert abs(r) < 3 / np.sqrt(s.size)

    def test_effective_variance_empirical(self, rng):
        c = make_standard("QPSK")
        s = c.sample(10**6, rng)
        x = s + GaussianTransmitNoise(0.1).sample(s, rng)
        assert np.var(x) == pytest.approx(effective_variance(c, 0.1), rel=1e-2)

    def test_conditional_pdf_degenerate(self):
        with pytest.raises(DegeneratePriorError):
            GaussianTransmitNoise(0.0).conditional_pdf(0.0, 1.0)


class TestEffectivePrior:
    def test_single_point_peak(self):
        a = 0.2 + 0.5j
        assert effective_prior_pdf(a, Constellation([a]), 0.3) == pytest.approx(1 / (np.pi * 0.3))

    def test_qpsk_at_origin(self):
        # four equal terms, |a|^2 = 1
        val = effective_prior_pdf(0.0, make_standard("QPSK"), 0.1)
        assert val == pytest.approx(np.exp(-10) / (0.1 * np.pi), rel=1e-12)
        assert val == pytest.approx(1.445e-4, rel=1e-3)

    @pytest.mark.parametrize("name,n_t", [("QPSK", 0.1), ("16-QAM", 0.02), ("8-PSK", 0.5)])
    def test_normalised(self, name, n_t):
        c = make_standard(name)
        lim = 1.5 + 8 * np.sqrt(n_t)
        total, _ = integrate.dblquad(
            lambda v, u: float(effective_prior_pdf(complex(u, v), c, n_t)),
            -lim, lim, -lim, lim, epsabs=1e-10, epsrel=1e-8,
        )
        assert abs(total - 1) < 1e-6

    def test_degenerate(self):
        with pytest.raises(DegeneratePriorError):
            effective_prior_pdf(0.0, make_standard("QPSK"), 0.0)

    @pytest.mark.parametrize(
        "c,n_t,expected",
        [(make_standard("QPSK"), 0.0, 1.0), (make_standard("QPSK"), 0.1, 1.1), (Constellation([1 + 1j]), 0.2, 0.2)],
    )
    def test_effective_variance(self, c, n_t, expected):
        assert effective_variance(c, n_t) == pytest.approx(expected, abs=1e-12)
