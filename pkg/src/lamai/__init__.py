"""Message-passing data detection for large MIMO with transmit impairments."""

from lamai.constellation import Constellation, hard_decision, make_standard, moments
from lamai.denoiser import brute_force_f_g, map_decide, posterior_f_g
from lamai.detector import lama_i_detect, lama_regular_detect, whitened_detect
from lamai.impairment import GaussianTransmitNoise
from lamai.kernels import BACKEND
from lamai.simulation import SystemConfig, evm_to_nt, sample_realization, snr_to_n0
from lamai.state_evolution import PsiSpec, psi, se_recursion, thresholds

__version__ = "0.1.0"
