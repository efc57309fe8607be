"""Transmit-side impairment models.

An impairment model describes the conditional law p(x|s) of the radiated
signal x given the data symbol s, applied independently per user.
"""

import abc
import math
from dataclasses import dataclass

import numpy as np

from lamai.constellation import Constellation, moments
from lamai.errors import ConfigurationError, DegeneratePriorError

__all__ = [
    "ImpairmentModel",
    "GaussianTransmitNoise",
    "complex_normal",
    "sample_impairment",
    "effective_prior_pdf",
    "effective_variance",
]


def complex_normal(rng, size, variance=1.0):
    """Circularly-symmetric CN(0, variance) samples.

    Real and imaginary parts are independent N(0, variance/2).
    """
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


class ImpairmentModel(abc.ABC):
    """Per-user transmit impairment p(x_l | s_l)."""

    @abc.abstractmethod
    def sample(self, s, rng):
        """Return the impairment e such that x = s + e."""

    @abc.abstractmethod
    def prior_variance(self, c: Constellation) -> float:
        """Var[X] of the effective transmit signal under prior ``c``."""

    def conditional_pdf(self, x, s):
        """Density p(x | s) on the complex plane; used by the quadrature oracle."""
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def conditional_logpdf(self, x, s):
        with np.errstate(divide="ignore"):
            return np.log(self.conditional_pdf(x, s))

    def posterior_scale(self, sigma2):
        """Rough per-axis width of p(x | z) used to size quadrature grids."""
        return np.sqrt(sigma2 / 2.0)

    @property
    def is_degenerate(self) -> bool:
        """True when x = s deterministically (no density exists)."""
        return False


@dataclass(frozen=True)
class GaussianTransmitNoise(ImpairmentModel):
    """Additive e ~ CN(0, n_t), independent of s and of the receive noise."""

    n_t: float = 0.0

    def __post_init__(self):
        if not (self.n_t >= 0.0 and math.isfinite(self.n_t)):
            raise ConfigurationError(f"transmit-noise variance must be >= 0, got {self.n_t}")

    @property
    def is_degenerate(self):
        return self.n_t == 0.0

    def sample(self, s, rng):
        s = np.asarray(s)
        if self.n_t == 0.0:
            return np.zeros(s.shape, dtype=np.complex128)
        return complex_normal(rng, s.shape, self.n_t)

    def prior_variance(self, c):
        return effective_variance(c, self.n_t)

    def conditional_pdf(self, x, s):
        if self.n_t == 0.0:
            raise DegeneratePriorError("N_T = 0: p(x|s) is a point mass")
        return np.exp(self.conditional_logpdf(x, s))

    def conditional_logpdf(self, x, s):
        if self.n_t == 0.0:
            raise DegeneratePriorError("N_T = 0: p(x|s) is a point mass")
        x = np.asarray(x)
        return -np.abs(x - s) ** 2 / self.n_t - np.log(np.pi * self.n_t)

    def posterior_scale(self, sigma2):
        if self.n_t == 0.0:
            return 0.0
        return np.sqrt(self.n_t * sigma2 / (2.0 * (self.n_t + sigma2)))

    @classmethod
    def from_evm_db(cls, evm_db, es=1.0):
        from lamai.simulation import evm_to_nt

        return cls(evm_to_nt(evm_db, es))


def sample_impairment(s, model: ImpairmentModel, rng):
    """Draw the impairment vector e for the symbol vector ``s``."""
    return model.sample(s, rng)


def effective_prior_pdf(x, c: Constellation, n_t: float):
    """Gaussian-mixture density of x = s + e, e ~ CN(0, n_t).

    Raises
    ------
    DegeneratePriorError
        For ``n_t == 0``, where the prior is a sum of point masses.
    """
    if n_t < 0:
        raise ConfigurationError("n_t must be non-negative")
    if n_t == 0:
        raise DegeneratePriorError("N_T = 0: use the discrete symbol prior instead")
    x = np.asarray(x, dtype=np.complex128)
    d2 = np.abs(x[..., None] - c.points) ** 2
    dens = np.sum(c.priors * np.exp(-d2 / n_t), axis=-1) / (np.pi * n_t)
    return dens[()] if dens.ndim == 0 else dens


def effective_variance(c: Constellation, n_t: float) -> float:
    """Var[X] = Var[S] + N_T for independent Gaussian transmit noise."""
    return moments(c)[1] + n_t
