"""Message-passing MIMO detectors.

All three detectors share one batched recursion (:func:`cbamp`):

* ``lama_i_detect`` uses the impairment-aware prior of x = s + e;
* ``lama_regular_detect`` ignores the impairment (discrete prior on s);
* ``whitened_detect`` whitens n + He first, then runs the regular detector.

Inputs may carry leading batch axes: ``y`` is ``(..., mr)`` and ``h`` is
``(..., mr, mt)``; every trial in a batch is processed independently.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from lamai.constellation import Constellation, moments
from lamai.denoiser import denoise, map_decide_indices
from lamai.errors import ConfigurationError, DivergenceError, NumericalToleranceError
from lamai.simulation import SystemConfig

__all__ = [
    "DetectionResult",
    "cbamp",
    "lama_i_detect",
    "lama_regular_detect",
    "whitened_detect",
    "whitening_matrix",
    "whiten",
    "DETECTORS",
]

TAU_LIMIT = 1e9
REL_TOL = 1e-8


@dataclass
class DetectionResult:
    """Output of one detection call (fields carry the batch axes of the input).

    ``tau_trace`` has the iteration axis first; ``z_trace`` and
    ``x_hat_trace`` are only filled when recording was requested.
    """

    s_hat: np.ndarray
    s_idx: np.ndarray
    z_final: np.ndarray
    sigma2_postulated: np.ndarray
    tau_trace: np.ndarray
    iterations: int
    diverged: np.ndarray
    diverged_at: np.ndarray
    z_trace: Optional[np.ndarray] = None
    x_hat_trace: Optional[np.ndarray] = None


def cbamp(
    y,
    h,
    n0: float,
    c: Constellation,
    n_t: float,
    tmax: int,
    record: bool = False,
    raise_on_divergence: bool = True,
) -> DetectionResult:
    """Run ``tmax`` message-passing iterations followed by the MAP stage.

    Parameters
    ----------
    y, h : ndarray
        Observations ``(..., mr)`` and channel ``(..., mr, mt)``.
    n0 : float or ndarray
        Receive-noise variance, scalar or one per trial.
    c : Constellation
        Symbol prior.
    n_t : float
        Transmit-noise variance assumed by the denoiser and the MAP rule;
        0 gives the impairment-agnostic detector.
    tmax : int
        Maximum iteration count. The loop also ends once every trial has
        ``|tau_{t+1} - tau_t| <= 1e-8 tau_t``.
    record : bool
        Keep every ``z^t`` and ``x_hat^t``.
    raise_on_divergence : bool
        Raise :class:`DivergenceError` if any trial produces a non-finite
        value or ``tau > 1e9``; otherwise flag it in ``diverged``.
    """
    if tmax < 1:
        raise ConfigurationError("tmax must be >= 1")
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    mr, mt = h.shape[-2:]
    if y.shape[-1] != mr or y.shape[:-1] != h.shape[:-2]:
        raise ConfigurationError(f"shape mismatch: y {y.shape} vs H {h.shape}")
    batch = y.shape[:-1]
    y = y.reshape(-1, mr)
    h = h.reshape(-1, mr, mt)
    nb = y.shape[0]
    n0 = np.broadcast_to(np.asarray(n0, dtype=np.float64), batch).reshape(-1)
    if np.any(n0 <= 0):
        raise ConfigurationError("n0 must be positive")

    beta = mt / mr
    mean_s, var_s = moments(c)
    hh = np.conj(np.swapaxes(h, -1, -2))

    x_hat = np.full((nb, mt), mean_s, dtype=np.complex128)
    r = y.copy()
    tau = beta * (var_s + n_t) / n0
    done = np.zeros(nb, dtype=bool)
    diverged = np.zeros(nb, dtype=bool)
    diverged_at = np.zeros(nb, dtype=np.int64)
    taus, zs, xs = [], [], []

    with np.errstate(all="ignore"):
        for t in range(1, tmax + 1):
            z = x_hat + np.matmul(hh, r[..., None])[..., 0]
            taus.append(tau)
            if record:
                zs.append(z)
                xs.append(x_hat)
            if t == tmax or np.all(done | diverged):
                break
            s2 = n0 * (1.0 + tau)
            f, g = denoise(z, s2[:, None], c, n_t)
            tau_next = beta / n0 * g.mean(axis=1)
            r = y - np.matmul(h, f[..., None])[..., 0] + (tau_next / (1.0 + tau))[:, None] * r
            x_hat = f
            bad = ~np.isfinite(tau_next) | (tau_next > TAU_LIMIT) | ~np.all(np.isfinite(r), axis=1)
            new_bad = bad & ~diverged
            diverged_at[new_bad] = t
            diverged |= bad
            done = np.abs(tau_next - tau) <= REL_TOL * tau
            tau = tau_next

    if raise_on_divergence and diverged.any():
        raise DivergenceError(int(diverged_at[diverged].min()))

    sigma2 = n0 * (1.0 + tau)
    s_idx = map_decide_indices(np.nan_to_num(z), sigma2[:, None], c, n_t)
    out = DetectionResult(
        s_hat=c.points[s_idx].reshape(*batch, mt),
        s_idx=s_idx.reshape(*batch, mt),
        z_final=z.reshape(*batch, mt),
        sigma2_postulated=sigma2.reshape(batch),
        tau_trace=np.stack(taus).reshape(len(taus), *batch),
        iterations=len(taus),
        diverged=diverged.reshape(batch),
        diverged_at=diverged_at.reshape(batch),
    )
    if record:
        out.z_trace = np.stack(zs).reshape(len(zs), *batch, mt)
        out.x_hat_trace = np.stack(xs).reshape(len(xs), *batch, mt)
    return out


def lama_i_detect(y, h, cfg: SystemConfig, tmax: int = 10, **kwargs) -> DetectionResult:
    """Impairment-aware detection (Gaussian transmit-noise prior)."""
    return cbamp(y, h, cfg.n0, cfg.constellation, cfg.n_t, tmax, **kwargs)


def lama_regular_detect(y, h, cfg: SystemConfig, tmax: int = 10, **kwargs) -> DetectionResult:
    """Impairment-agnostic detection: same recursion with the discrete prior on s."""
    return cbamp(y, h, cfg.n0, cfg.constellation, 0.0, tmax, **kwargs)


def whitening_matrix(h, n_t: float, n0: float):
    """Q^{-1/2} for Q = n_t H H^H + n0 I via a Hermitian eigendecomposition."""
    h = np.asarray(h, dtype=np.complex128)
    mr = h.shape[-2]
    q = n_t * np.matmul(h, np.conj(np.swapaxes(h, -1, -2))) + n0 * np.eye(mr)
    lam, u = np.linalg.eigh(q)
    if np.any(lam < n0 * (1.0 - 1e-9)):
        raise NumericalToleranceError("noise covariance has an eigenvalue below n0")
    lam = np.maximum(lam, n0 * 1e-12)
    return np.matmul(u * lam[..., None, :] ** -0.5, np.conj(np.swapaxes(u, -1, -2)))


def whiten(y, h, n_t: float, n0: float, method: str = "auto"):
    """Whitened pair ``(Q^{-1/2} y, Q^{-1/2} H)``.

    ``method="gram"`` diagonalises the mt x mt Gram matrix H^H H instead of
    the mr x mr covariance; both give the same Q^{-1/2} applied to y and H.
    ``"auto"`` picks the smaller problem.
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    mr, mt = h.shape[-2:]
    if method == "auto":
        method = "gram" if mt < mr else "full"
    if method == "full":
        w = whitening_matrix(h, n_t, n0)
        return np.matmul(w, y[..., None])[..., 0], np.matmul(w, h)
    if method != "gram":
        raise ConfigurationError(f"unknown whitening method {method!r}")

    hh = np.conj(np.swapaxes(h, -1, -2))
    lam, v = np.linalg.eigh(np.matmul(hh, h))
    lam = np.maximum(lam, 0.0)
    q_eig = n_t * lam + n0
    if np.any(q_eig < n0 * (1.0 - 1e-9)):
        raise NumericalToleranceError("noise covariance has an eigenvalue below n0")
    g = np.maximum(q_eig, n0 * 1e-12) ** -0.5
    vh = np.conj(np.swapaxes(v, -1, -2))
    wh = np.matmul(h, np.matmul(v * g[..., None, :], vh))
    # (g - n0^-1/2)/lam, with its lam -> 0 limit
    small = lam < 1e-12 * np.maximum(lam.max(axis=-1, keepdims=True), 1e-300)
    safe = np.where(small, 1.0, lam)
    corr = np.where(small, -0.5 * n_t * n0 ** -1.5, (g - n0 ** -0.5) / safe)
    hy = np.matmul(hh, y[..., None])
    wy = n0 ** -0.5 * y + np.matmul(h, np.matmul(v * corr[..., None, :], np.matmul(vh, hy)))[..., 0]
    return wy, wh


def whitened_detect(y, h, cfg: SystemConfig, tmax: int = 10, method: str = "auto", **kwargs):
    """Regular detection on the whitened system y~ = W H s + n~.

    The whitened pair is rescaled so that W H keeps the Frobenius norm of
    H (the column-energy normalisation the recursion assumes); the noise
    variance handed to the detector is rescaled accordingly.
    """
    wy, wh = whiten(y, h, cfg.n_t, cfg.n0, method=method)
    h = np.asarray(h)
    gain2 = np.sum(np.abs(wh) ** 2, axis=(-2, -1)) / np.sum(np.abs(h) ** 2, axis=(-2, -1))
    gain = np.sqrt(gain2)
    return cbamp(
        wy / gain[..., None],
        wh / gain[..., None, None],
        1.0 / gain2,
        cfg.constellation,
        0.0,
        tmax,
        **kwargs,
    )


DETECTORS = {
    "lama-i": lama_i_detect,
    "lama": lama_regular_detect,
    "lama-whitened": whitened_detect,
}
