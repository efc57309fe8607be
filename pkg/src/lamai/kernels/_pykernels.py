"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is not built or ``LAMAI_PURE_PYTHON`` is set.
"""

import numpy as np

_BLOCK = 1 << 16


def _posterior(z, s2, points, log_priors, n_t):
    v = n_t + s2
    expo = log_priors - np.abs(z[:, None] - points) ** 2 / v[:, None]
    expo -= expo.max(axis=1, keepdims=True)
    w = np.exp(expo)
    tot = w.sum(axis=1)
    m = (w @ points) / tot
    spread = np.sum(w * np.abs(points - m[:, None]) ** 2, axis=1) / tot
    if n_t == 0.0:
        return m, spread
    c = s2 / v
    f = (n_t * z + s2 * m) / v
    g = n_t * c + c * c * spread
    return f, g


def denoise(z, sigma2, points, log_priors, n_t):
    """Posterior mean and variance of x given z = x + CN(0, sigma2).

    ``z`` is 1-D complex; ``sigma2`` is a scalar or matches ``z``.
    """
    z = np.asarray(z, dtype=np.complex128)
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), z.shape)
    f = np.empty_like(z)
    g = np.empty(z.shape, dtype=np.float64)
    for lo in range(0, z.size, _BLOCK):
        sl = slice(lo, lo + _BLOCK)
        f[sl], g[sl] = _posterior(z[sl], s2[sl], points, log_priors, float(n_t))
    return f, g


def psi_mse(x, zeta, sigma2, points, log_priors, n_t):
    """Sample means of |F(y, sigma2) - x|^2 and G(y, sigma2), y = x + sqrt(sigma2) zeta."""
    x = np.asarray(x, dtype=np.complex128)
    zeta = np.asarray(zeta, dtype=np.complex128)
    sd = np.sqrt(sigma2)
    acc = gacc = 0.0
    for lo in range(0, x.size, _BLOCK):
        xs = x[lo:lo + _BLOCK]
        ys = xs + sd * zeta[lo:lo + _BLOCK]
        s2 = np.full(xs.shape, float(sigma2))
        f, g = _posterior(ys, s2, points, log_priors, float(n_t))
        acc += float(np.sum(np.abs(f - xs) ** 2))
        gacc += float(np.sum(g))
    return acc / x.size, gacc / x.size


def map_decide(z, variance, points, log_priors):
    """Index of argmin_a |z - a|^2 / variance - log p_a (lowest index on ties)."""
    z = np.asarray(z, dtype=np.complex128)
    var = np.broadcast_to(np.asarray(variance, dtype=np.float64), z.shape)
    out = np.empty(z.shape, dtype=np.int64)
    for lo in range(0, z.size, _BLOCK):
        sl = slice(lo, lo + _BLOCK)
        cost = np.abs(z[sl, None] - points) ** 2 / var[sl, None] - log_priors
        out[sl] = np.argmin(cost, axis=1)
    return out
