"""Signal and channel generation for y = H (s + e) + n."""

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lamai.constellation import Constellation, make_standard
from lamai.errors import ConfigurationError
from lamai.impairment import GaussianTransmitNoise, ImpairmentModel, complex_normal

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "sample_realization",
    "sample_batch",
    "trial_rng",
    "snr_to_n0",
    "n0_to_snr",
    "evm_to_nt",
    "nt_to_evm",
]


def snr_to_n0(snr_db: float, beta: float, es: float = 1.0) -> float:
    """Receive-noise variance for an average receive SNR of beta*Es/N0."""
    return beta * es / 10.0 ** (snr_db / 10.0)


def n0_to_snr(n0: float, beta: float, es: float = 1.0) -> float:
    return 10.0 * math.log10(beta * es / n0)


def evm_to_nt(evm_db: float, es: float = 1.0) -> float:
    """Transmit-noise variance for EVM = N_T/Es; ``-inf`` dB gives 0."""
    if evm_db == -math.inf:
        return 0.0
    return es * 10.0 ** (evm_db / 10.0)


def nt_to_evm(n_t: float, es: float = 1.0) -> float:
    if n_t == 0:
        return -math.inf
    return 10.0 * math.log10(n_t / es)


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for one (seed, key...) tuple, e.g. (seed, point, trial)."""
    return np.random.default_rng([int(seed), *map(int, keys)])


@dataclass(frozen=True)
class SystemConfig:
    """One MIMO operating point.

    ``n0`` is the receive-noise variance per complex entry; the channel has
    i.i.d. CN(0, 1/mr) entries.
    """

    mr: int
    mt: int
    n0: float
    constellation: Constellation = field(default_factory=lambda: make_standard("QPSK"))
    impairment: ImpairmentModel = field(default_factory=GaussianTransmitNoise)
    seed: int = 0

    def __post_init__(self):
        if self.mr < 1 or self.mt < 1:
            raise ConfigurationError("antenna counts must be positive")
        if not (self.n0 > 0 and math.isfinite(self.n0)):
            raise ConfigurationError(f"n0 must be positive, got {self.n0}")

    @property
    def beta(self) -> float:
        return self.mt / self.mr

    @property
    def n_t(self) -> float:
        return getattr(self.impairment, "n_t", 0.0)

    @classmethod
    def from_db(cls, mr, mt, snr_db, evm_db=-math.inf, constellation="QPSK", seed=0):
        c = constellation if isinstance(constellation, Constellation) else make_standard(constellation)
        n0 = snr_to_n0(snr_db, mt / mr, c.energy)
        return cls(mr, mt, n0, c, GaussianTransmitNoise(evm_to_nt(evm_db, c.energy)), seed)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    s: np.ndarray
    e: np.ndarray
    x: np.ndarray
    n: np.ndarray
    y: np.ndarray
    s_idx: np.ndarray


def sample_realization(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw (H, s, e, n) and form x = s + e, y = H x + n."""
    h = complex_normal(rng, (cfg.mr, cfg.mt), 1.0 / cfg.mr)
    s_idx = cfg.constellation.sample_indices(cfg.mt, rng)
    s = cfg.constellation.points[s_idx]
    e = cfg.impairment.sample(s, rng)
    x = s + e
    n = complex_normal(rng, cfg.mr, cfg.n0)
    y = h @ x + n
    return ChannelRealization(h, s, e, x, n, y, s_idx)


def sample_batch(cfg: SystemConfig, rngs: Sequence[np.random.Generator]) -> ChannelRealization:
    """Stack one realization per generator along a leading trial axis."""
    reals = [sample_realization(cfg, r) for r in rngs]
    return ChannelRealization(*(np.stack(a) for a in zip(*(
        (r.h, r.s, r.e, r.x, r.n, r.y, r.s_idx) for r in reals
    ))))
