"""State evolution of the message-passing detector and its fixed points.

The scalar recursion ``sigma2_{t+1} = n0 + beta * psi(sigma2_t)`` predicts
the effective noise variance of the decoupled channel; ``psi`` is the MSE of
the posterior-mean denoiser on ``X + sigma Z``. Recovery thresholds and the
regime map are read off ``psi`` and its derivative on a log-spaced grid.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erfc

from lamai import kernels
from lamai.constellation import Constellation, make_standard
from lamai.denoiser import map_decide_indices
from lamai.errors import ConfigurationError, InconsistencyError
from lamai.impairment import complex_normal, effective_variance

log = logging.getLogger(__name__)

__all__ = [
    "PsiSpec",
    "SeTrace",
    "ThresholdReport",
    "PsiTable",
    "psi",
    "psi_derivative",
    "fixed_point",
    "se_recursion",
    "fixed_point_scan",
    "psi_table",
    "thresholds",
    "classify_regime",
    "beta_min_over_nt",
    "linear_denoiser_mse",
    "qfunc",
    "predicted_ser",
    "DEFAULT_GRID",
]

DEFAULT_GRID = (1e-6, 1e3, 400)
DERIV_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class PsiSpec:
    """How to evaluate the MSE function for one (prior, N_T) pair.

    Monte Carlo samples are drawn once from ``seed`` and reused at every
    ``sigma2`` (common random numbers), so grid differences are smooth.
    Single-point priors use the closed form unless ``closed_form=False``.

    ``estimator`` picks the sample average: ``"posterior-variance"`` averages
    G(X + sigma Z) (equal in expectation to the squared error for the
    posterior mean, with far lower variance), ``"squared-error"`` averages
    |F(X + sigma Z) - X|^2 directly.

    ``denoiser`` replaces the posterior mean by an arbitrary
    ``f(z, sigma2) -> x_hat`` (squared-error Monte Carlo is then always used).
    """

    constellation: Constellation = field(default_factory=lambda: make_standard("QPSK"))
    n_t: float = 0.0
    samples: int = 1_000_000
    seed: int = 0
    closed_form: bool = True
    denoiser: Optional[Callable] = None
    estimator: str = "posterior-variance"

    def __post_init__(self):
        if self.estimator not in ("posterior-variance", "squared-error"):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.n_t < 0:
            raise ConfigurationError("n_t must be non-negative")
        if self.samples < 1:
            raise ConfigurationError("samples must be positive")

    @property
    def degenerate(self) -> bool:
        return self.closed_form and self.denoiser is None and np.count_nonzero(self.constellation.priors) == 1

    @property
    def var_x(self) -> float:
        return effective_variance(self.constellation, self.n_t)

    @cached_property
    def draws(self):
        """``(x, z)``: effective-prior samples and CN(0, 1) noise."""
        rng = np.random.default_rng(self.seed)
        s = self.constellation.sample(self.samples, rng)
        e = complex_normal(rng, self.samples)
        zeta = complex_normal(rng, self.samples)
        return s + math.sqrt(self.n_t) * e, zeta

    def with_n_t(self, n_t):
        return dataclasses.replace(self, n_t=n_t)


def psi(sigma2: float, spec: PsiSpec) -> float:
    """MSE E|F(X + sigma Z, sigma2) - X|^2 of the denoiser at noise ``sigma2``."""
    if sigma2 <= 0:
        raise ConfigurationError("sigma2 must be positive")
    if spec.degenerate:
        return spec.n_t * sigma2 / (spec.n_t + sigma2)
    x, zeta = spec.draws
    if spec.denoiser is not None:
        xh = spec.denoiser(x + math.sqrt(sigma2) * zeta, sigma2)
        return float(np.mean(np.abs(xh - x) ** 2))
    c = spec.constellation
    sq, post_var = kernels.psi_mse(x, zeta, float(sigma2), c.points, c.log_priors, float(spec.n_t))
    return float(post_var if spec.estimator == "posterior-variance" else sq)


def psi_derivative(sigma2: float, spec: PsiSpec, step: float = DERIV_STEP) -> float:
    """Central difference with relative step ``step * sigma2``."""
    h = step * sigma2
    return (psi(sigma2 + h, spec) - psi(sigma2 - h, spec)) / (2.0 * h)


def linear_denoiser_mse(coef: float, n_t: float) -> Callable[[float], float]:
    """MSE of x_hat = coef*z + (1 - coef)*a for the single-point prior {a}.

    With X = a + e and Z = X + sigma W the error is (coef - 1)e + coef*sigma*W,
    so the MSE is (1 - coef)^2 n_t + coef^2 sigma2.
    """
    return lambda sigma2: (1.0 - coef) ** 2 * n_t + coef**2 * sigma2


@dataclass
class SeTrace:
    sigma2: np.ndarray
    converged: bool
    fixed_point: float
    residual: float


def fixed_point(mse: Callable[[float], float], beta: float, n0: float, start: float, tmax: int = 10_000, rtol: float = 1e-10) -> SeTrace:
    """Iterate sigma2 <- n0 + beta*mse(sigma2) from ``start``.

    Shared by the detector state evolution and the replica fixed-point
    equation, which are the same map.
    """
    if beta <= 0 or n0 <= 0:
        raise ConfigurationError("beta and n0 must be positive")
    seq = [float(start)]
    converged = False
    for _ in range(tmax - 1):
        nxt = n0 + beta * mse(seq[-1])
        seq.append(nxt)
        if not np.isfinite(nxt):
            break
        if abs(nxt - seq[-2]) < rtol * nxt:
            converged = True
            break
    arr = np.array(seq)
    if not np.isfinite(arr[-1]):
        return SeTrace(arr, False, np.inf, np.inf)
    steps = np.diff(arr)
    if steps.size > 1 and np.any(steps[1:] * steps[0] < -1e-12 * arr[1:-1]):
        log.warning("state evolution is not monotone; psi estimate may be noisy")
    fp = seq[-1]
    return SeTrace(arr, converged, fp, abs(fp - n0 - beta * mse(fp)))


def se_recursion(spec: PsiSpec, beta: float, n0: float, tmax: int = 10_000, mse: Optional[Callable] = None) -> SeTrace:
    """State evolution from sigma2_1 = n0 + beta*Var[X].

    ``sigma2[t-1]`` is the predicted variance of ``z^t - x``. The loop stops
    early at ``|delta| < 1e-10 sigma2``; ``mse`` overrides ``psi(., spec)``.
    """
    fn = mse if mse is not None else (lambda s2: psi(s2, spec))
    return fixed_point(fn, beta, n0, n0 + beta * spec.var_x, tmax=tmax)


def _sign_changes(v):
    s = np.sign(v)
    nz = s != 0
    s = s[nz]
    return int(np.count_nonzero(s[1:] != s[:-1]))


@dataclass
class PsiTable:
    """psi and its derivative tabulated on a log grid of sigma2."""

    spec: PsiSpec
    sigma2: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray

    @property
    def slope_at_zero(self) -> float:
        """lim psi(s)/s = lim psi'(s) as s -> 0.

        1 when the effective prior has a density (the posterior becomes
        Gaussian around z), 0 for a purely discrete prior.
        """
        return 0.0 if self.spec.n_t == 0 and self.spec.denoiser is None else 1.0

    def dpsi_at(self, s2):
        return psi_derivative(s2, self.spec)


def psi_table(spec: PsiSpec, grid=DEFAULT_GRID) -> PsiTable:
    lo, hi, n = grid
    s2 = np.logspace(math.log10(lo), math.log10(hi), int(n))
    vals = np.array([psi(v, spec) for v in s2])
    up = np.array([psi(v * (1 + DERIV_STEP), spec) for v in s2])
    dn = np.array([psi(v * (1 - DERIV_STEP), spec) for v in s2])
    return PsiTable(spec, s2, vals, (up - dn) / (2 * DERIV_STEP * s2))


@dataclass
class ThresholdReport:
    beta_max: float
    beta_min: float
    beta: Optional[float] = None
    n0_min: Optional[float] = None
    n0_max: Optional[float] = None
    critical_points: list = field(default_factory=list)
    regime: Optional[str] = None

    def to_dict(self):
        return {
            "beta_max": self.beta_max,
            "beta_min": self.beta_min,
            "beta": self.beta,
            "n0_min": self.n0_min,
            "n0_max": self.n0_max,
            "critical_points": list(self.critical_points),
            "regime": self.regime,
        }


def _critical_points(table: PsiTable, beta: float, iters: int = 60):
    """sigma2 values where beta*psi'(sigma2) = 1, refined by bisection in log sigma2."""
    f = beta * table.dpsi - 1.0
    roots = []
    for k in np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]:
        a, b = math.log(table.sigma2[k]), math.log(table.sigma2[k + 1])
        fa = f[k]
        for _ in range(iters):
            m = 0.5 * (a + b)
            fm = beta * table.dpsi_at(math.exp(m)) - 1.0
            if fm == 0:
                a = b = m
                break
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
            if b - a < 1e-12:
                break
        roots.append(math.exp(0.5 * (a + b)))
    return roots


def classify_regime(beta, n0, beta_min, beta_max, n0_min=None, n0_max=None) -> str:
    """Which uniqueness regime (beta, n0) falls into.

    Returns ``"regime-1"``, ``"regime-2"``, ``"regime-3"`` or
    ``"not-guaranteed"``.
    """
    if beta <= beta_min:
        return "regime-1"
    if beta < beta_max:
        if n0_min is not None and (n0 < n0_min or n0 > n0_max):
            return "regime-2"
        return "not-guaranteed"
    if n0_max is not None and n0 > n0_max:
        return "regime-3"
    return "not-guaranteed"


def thresholds(spec: PsiSpec, beta: Optional[float] = None, n0: Optional[float] = None,
               grid=DEFAULT_GRID, table: Optional[PsiTable] = None) -> ThresholdReport:
    """Recovery thresholds and, for a given ``beta``, the critical noise levels.

    beta_max = min sigma2/psi and beta_min = min 1/psi' over the grid and the
    sigma2 -> 0 limit. For ``beta`` the points where beta*psi' = 1 give
    n0_min/n0_max as min/max of sigma2 - beta*psi(sigma2); with ``n0`` the
    regime is classified too.

    Raises
    ------
    InconsistencyError
        If beta lies strictly between the thresholds but no critical point
        is found.
    """
    table = table if table is not None else psi_table(spec, grid)
    with np.errstate(divide="ignore", over="ignore"):
        ratio = np.where(table.psi > 0, table.sigma2 / table.psi, np.inf)
    zero_slope = table.slope_at_zero
    beta_max = float(min(ratio.min(), 1.0 / zero_slope if zero_slope > 0 else np.inf))
    max_slope = max(float(table.dpsi.max()), zero_slope)
    beta_min = 1.0 / max_slope if max_slope > 0 else math.inf
    if beta_min > beta_max:
        raise InconsistencyError(f"beta_min {beta_min:.6g} exceeds beta_max {beta_max:.6g}")
    report = ThresholdReport(beta_max=beta_max, beta_min=beta_min, beta=beta)
    if beta is None:
        return report
    roots = _critical_points(table, beta)
    report.critical_points = roots
    if roots:
        vals = [r - beta * psi(r, spec) for r in roots]
        report.n0_min, report.n0_max = float(min(vals)), float(max(vals))
    elif beta_min < beta < beta_max:
        raise InconsistencyError(
            f"no critical point for beta={beta} inside ({beta_min:.6g}, {beta_max:.6g})"
        )
    if n0 is not None:
        report.regime = classify_regime(beta, n0, beta_min, beta_max, report.n0_min, report.n0_max)
    return report


def fixed_point_scan(table: PsiTable, beta: float, n0: float):
    """All fixed points of sigma2 = n0 + beta*psi(sigma2) visible on the grid.

    Returns ``(count, brackets)``: the number of sign changes of
    ``sigma2 - n0 - beta*psi`` and the grid intervals containing them.
    """
    f = table.sigma2 - n0 - beta * table.psi
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    brackets = [(float(table.sigma2[k]), float(table.sigma2[k + 1])) for k in idx]
    return _sign_changes(f), brackets


def beta_min_over_nt(spec: PsiSpec, nt_grid: Sequence[float], grid=DEFAULT_GRID, tables: Optional[dict] = None):
    """min over N_T of beta_min(N_T).

    Returns ``(value, argmin_nt, per_nt)`` where ``per_nt`` lists
    beta_min at each grid value. If ``tables`` is a dict it receives the
    psi table of every N_T (keyed by N_T) for reuse.
    """
    per = []
    for nt in nt_grid:
        table = psi_table(spec.with_n_t(float(nt)), grid)
        if tables is not None:
            tables[float(nt)] = table
        per.append(thresholds(table.spec, table=table).beta_min)
    per = np.array(per)
    k = int(np.argmin(per))
    return float(per[k]), float(nt_grid[k]), per


def qfunc(u):
    """Gaussian tail probability Q(u) = 0.5 erfc(u / sqrt(2))."""
    return 0.5 * erfc(np.asarray(u) / math.sqrt(2.0))


def _is_square_qpsk(c: Constellation) -> bool:
    if len(c) != 4 or not c.is_uniform:
        return False
    amp = np.abs(c.points.real)
    return bool(np.allclose(amp, amp[0]) and np.allclose(np.abs(c.points.imag), amp[0])
                and len({(np.sign(p.real), np.sign(p.imag)) for p in c.points}) == 4)


def predicted_ser(spec: PsiSpec, beta: float, n0: float, c: Optional[Constellation] = None,
                  sigma2: Optional[float] = None, samples: int = 10_000_000, seed: int = 1) -> float:
    """Large-system SER of the MAP stage on z = s + e + CN(0, sigma2*).

    ``sigma2*`` is the fixed point reached from the usual initialisation
    unless given. Uniform QPSK uses SER = 2q - q^2 with
    q = Q(sqrt(Es / (N_T + sigma2*))); other sets use scalar Monte Carlo.
    """
    c = c if c is not None else spec.constellation
    if sigma2 is None:
        sigma2 = se_recursion(spec, beta, n0).fixed_point
    v = spec.n_t + sigma2
    if _is_square_qpsk(c):
        q = float(qfunc(math.sqrt(c.energy / v)))
        return 2 * q - q * q
    rng = np.random.default_rng(seed)
    errors = 0
    done = 0
    while done < samples:
        k = min(1 << 20, samples - done)
        idx = c.sample_indices(k, rng)
        z = c.points[idx] + complex_normal(rng, k, v)
        errors += int(np.count_nonzero(map_decide_indices(z, sigma2, c, spec.n_t) != idx))
        done += k
    return errors / samples
