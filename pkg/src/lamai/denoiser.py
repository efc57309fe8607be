"""Scalar Bayesian denoisers for the decoupled channel z = x + CN(0, sigma2).

``posterior_f_g`` evaluates the closed-form posterior mean/variance of the
Gaussian transmit-noise prior term by term; ``denoise`` is the same map
routed through the compiled kernel and is what the detectors call.
``brute_force_f_g`` integrates the posterior on a 2-D grid and shares no
code with either; it exists to validate them.
"""

from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from lamai import kernels
from lamai.constellation import Constellation
from lamai.errors import ConfigurationError, NumericalToleranceError
from lamai.impairment import GaussianTransmitNoise, ImpairmentModel

__all__ = [
    "PosteriorSummary",
    "posterior_f_g",
    "softmax_weights",
    "denoise",
    "brute_force_f_g",
    "map_decide",
    "map_decide_indices",
]


class PosteriorSummary(NamedTuple):
    mean: complex
    variance: float
    weights: np.ndarray


def _check(sigma2, n_t):
    if np.any(np.asarray(sigma2) <= 0):
        raise ConfigurationError("sigma2 must be positive")
    if n_t < 0:
        raise ConfigurationError("n_t must be non-negative")


def softmax_weights(z, sigma2, c: Constellation, n_t: float):
    """Component responsibilities w_a of the posterior mixture.

    w_a is proportional to p_a exp(-|z - a|^2 / (n_t + sigma2)); the largest
    exponent is subtracted before exponentiating so high SNR cannot overflow.
    """
    z = np.asarray(z, dtype=np.complex128)
    v = n_t + np.asarray(sigma2, dtype=np.float64)
    expo = c.log_priors - np.abs(z[..., None] - c.points) ** 2 / v[..., None]
    expo = expo - np.max(expo, axis=-1, keepdims=True)
    w = np.exp(expo)
    return w / np.sum(w, axis=-1, keepdims=True)


def posterior_f_g(z, sigma2, c: Constellation, n_t: float) -> PosteriorSummary:
    """Posterior mean F, variance G and weights w_a for x = s + e, e ~ CN(0, n_t).

    Works for scalar or array ``z`` (``sigma2`` broadcasts against it).
    With ``n_t == 0`` this is the discrete-prior denoiser of impairment-free
    detection.
    """
    _check(sigma2, n_t)
    z = np.asarray(z, dtype=np.complex128)
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), z.shape)
    w = softmax_weights(z, s2, c, n_t)
    wa = np.sum(w * c.points, axis=-1)
    if n_t == 0.0:
        f = wa
        g = np.sum(w * np.abs(c.points - f[..., None]) ** 2, axis=-1)
    else:
        v = n_t + s2
        f = n_t / v * z + s2 / v * wa
        comp = (n_t * z[..., None] + s2[..., None] * c.points) / v[..., None]
        g = n_t * s2 / v + np.sum(w * np.abs(comp - f[..., None]) ** 2, axis=-1)
    if z.ndim == 0:
        return PosteriorSummary(complex(f), float(g), w)
    return PosteriorSummary(f, g, w)


def denoise(z, sigma2, c: Constellation, n_t: float):
    """Vectorised ``(F, G)`` through the selected kernel backend.

    ``z`` may have any shape; ``sigma2`` must broadcast to it.
    """
    z = np.asarray(z, dtype=np.complex128)
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), z.shape)
    f, g = kernels.denoise(
        z.ravel(), np.ascontiguousarray(s2).ravel(), c.points, c.log_priors, float(n_t)
    )
    return f.reshape(z.shape), g.reshape(z.shape)


def _as_model(impairment):
    if isinstance(impairment, ImpairmentModel):
        return impairment
    return GaussianTransmitNoise(float(impairment))


def brute_force_f_g(
    z,
    sigma2,
    c: Constellation,
    impairment,
    spacing=None,
    margin=None,
    max_points=4_000_000,
) -> PosteriorSummary:
    """Posterior mean/variance by direct 2-D quadrature.

    The unnormalised posterior ``p(z|x) p(x|a) p_a`` is tabulated on a
    uniform grid covering the constellation and ``z``; moments and the
    per-component masses follow by summation. A degenerate impairment
    (``N_T = 0``) collapses the integral onto the points.

    Parameters
    ----------
    impairment : ImpairmentModel or float
        A float is taken as the Gaussian transmit-noise variance.
    spacing, margin : float, optional
        Grid step and padding around the hull of the points and ``z``.
        Default from the model's posterior width.

    Raises
    ------
    NumericalToleranceError
        When the normalisation on the grid and on its 2x-coarsened subgrid
        disagree by more than 1e-4 (relative), or the grid is too large.
    """
    z = complex(z)
    sigma2 = float(sigma2)
    model = _as_model(impairment)
    if sigma2 <= 0:
        raise ConfigurationError("sigma2 must be positive")
    if model.is_degenerate:
        logw = c.log_priors - np.abs(z - c.points) ** 2 / sigma2
        w = np.exp(logw - logsumexp(logw))
        f = complex(np.sum(w * c.points))
        g = float(np.sum(w * np.abs(c.points - f) ** 2))
        return PosteriorSummary(f, g, w)

    width = float(model.posterior_scale(sigma2))
    h = spacing if spacing is not None else width / 2.0
    pad = margin if margin is not None else 12.0 * width
    pts = np.append(c.points, z)
    re = np.arange(pts.real.min() - pad, pts.real.max() + pad + h, h)
    im = np.arange(pts.imag.min() - pad, pts.imag.max() + pad + h, h)
    if re.size * im.size > max_points:
        raise NumericalToleranceError(f"quadrature grid of {re.size}x{im.size} points is too large")
    x = re[:, None] + 1j * im[None, :]

    loglik = -np.abs(z - x) ** 2 / sigma2
    comp = np.stack(
        [lp + model.conditional_logpdf(x, a) for a, lp in zip(c.points, c.log_priors)]
    )
    logpost = loglik + logsumexp(comp, axis=0)
    shift = logpost.max()
    dens = np.exp(logpost - shift)

    mass = dens.sum()
    coarse = dens[::2, ::2].sum() * 4.0
    if abs(coarse - mass) > 1e-4 * mass:
        raise NumericalToleranceError(
            f"grid too coarse: normalisation {mass:.6g} vs {coarse:.6g} on the 2h subgrid"
        )
    f = complex(np.sum(x * dens) / mass)
    g = float(np.sum(np.abs(x - f) ** 2 * dens) / mass)
    w = np.array([np.sum(np.exp(loglik + cm - shift)) for cm in comp]) / mass
    return PosteriorSummary(f, g, w)


def map_decide_indices(z, sigma2_eff, c: Constellation, n_t: float):
    """Index form of :func:`map_decide` for arrays of observations."""
    z = np.asarray(z, dtype=np.complex128)
    var = n_t + np.broadcast_to(np.asarray(sigma2_eff, dtype=np.float64), z.shape)
    if np.any(var <= 0):
        raise ConfigurationError("MAP noise variance must be positive")
    idx = kernels.map_decide(z.ravel(), np.ascontiguousarray(var).ravel(), c.points, c.log_priors)
    return idx.reshape(z.shape)


def map_decide(z, sigma2_eff, c: Constellation, n_t: float):
    """MAP symbol: argmin_a |z - a|^2 / (n_t + sigma2_eff) - log p_a.

    Symbols with zero prior are never chosen; ties go to the lowest index.
    """
    idx = map_decide_indices(z, sigma2_eff, c, n_t)
    out = c.points[idx]
    return out[()] if np.ndim(out) == 0 else out
