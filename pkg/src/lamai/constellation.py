"""Finite constellations with symbol priors.

Points are stored in label order: for the standard QAM/PSK sets the index
of a point equals its Gray-coded integer label, so ``points[k]`` carries the
bit pattern ``k``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from lamai.errors import ConfigurationError

__all__ = [
    "Constellation",
    "make_standard",
    "from_records",
    "load_json",
    "moments",
    "hard_decision",
    "STANDARD_NAMES",
]

STANDARD_NAMES = ("BPSK", "QPSK", "16-QAM", "64-QAM", "8-PSK")


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Constellation:
    """A symbol alphabet with prior probabilities.

    Parameters
    ----------
    points : array_like of complex
        Distinct constellation points.
    priors : array_like of float, optional
        Prior probability of each point. Uniform when omitted.
    name : str
        Display name; ``"custom"`` for user-supplied sets.
    labels : array_like of int, optional
        Bit label of each point (Gray mapping for the standard sets).
    """

    points: np.ndarray
    priors: Optional[np.ndarray] = None
    name: str = "custom"
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        points = np.atleast_1d(np.asarray(self.points, dtype=np.complex128))
        if points.ndim != 1 or points.size == 0:
            raise ConfigurationError("constellation needs a non-empty 1-D point list")
        if self.priors is None:
            priors = np.full(points.size, 1.0 / points.size)
        else:
            priors = np.atleast_1d(np.asarray(self.priors, dtype=np.float64))
        if priors.shape != points.shape:
            raise ConfigurationError("priors must align with points")
        if not np.all(np.isfinite(points)):
            raise ConfigurationError("constellation points must be finite")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ConfigurationError("priors must be non-negative and sum to 1")
        if points.size > 1:
            gaps = np.abs(points[:, None] - points[None, :])
            gaps[np.diag_indices(points.size)] = np.inf
            if gaps.min() == 0.0:
                raise ConfigurationError("constellation points must be distinct")
        es = float(np.sum(priors * np.abs(points) ** 2))
        if not (es > 0.0 and math.isfinite(es)):
            raise ConfigurationError("constellation energy must be finite and positive")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "priors", _readonly(priors))
        if self.labels is not None:
            object.__setattr__(self, "labels", _readonly(np.asarray(self.labels, dtype=np.int64)))

    def __len__(self):
        return self.points.size

    @property
    def energy(self) -> float:
        """Average symbol energy Es = sum_a p_a |a|^2."""
        return float(np.sum(self.priors * np.abs(self.points) ** 2))

    @property
    def log_priors(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.priors)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.priors == self.priors[0]))

    def sample(self, size, rng) -> np.ndarray:
        """Draw i.i.d. symbols from the prior."""
        if self.is_uniform:
            idx = rng.integers(0, len(self), size=size)
        else:
            idx = rng.choice(len(self), size=size, p=self.priors)
        return self.points[idx]

    def sample_indices(self, size, rng) -> np.ndarray:
        if self.is_uniform:
            return rng.integers(0, len(self), size=size)
        return rng.choice(len(self), size=size, p=self.priors)

    def to_records(self):
        return [
            {"re": float(a.real), "im": float(a.imag), "prior": float(p)}
            for a, p in zip(self.points, self.priors)
        ]


def _gray(n):
    return n ^ (n >> 1)


def _pam_levels(bits):
    # level for Gray label g; label 0 sits at the most positive amplitude
    size = 1 << bits
    levels = np.empty(size)
    for i in range(size):
        levels[_gray(i)] = (size - 1) - 2 * i
    return levels


def _square_qam(bits_per_axis):
    levels = _pam_levels(bits_per_axis)
    side = levels.size
    labels = np.arange(side * side)
    pts = levels[labels >> bits_per_axis] + 1j * levels[labels & (side - 1)]
    return pts, labels


def _psk(order):
    labels = np.arange(order)
    pts = np.empty(order, dtype=np.complex128)
    for k in range(order):
        pts[_gray(k)] = np.exp(2j * np.pi * k / order)
    return pts, labels


def _canonical(name):
    key = name.upper().replace("_", "").replace("-", "").replace(" ", "")
    table = {
        "BPSK": "BPSK",
        "QPSK": "QPSK",
        "4QAM": "QPSK",
        "16QAM": "16-QAM",
        "64QAM": "64-QAM",
        "8PSK": "8-PSK",
    }
    try:
        return table[key]
    except KeyError:
        raise ConfigurationError(
            f"unknown constellation {name!r}; expected one of {', '.join(STANDARD_NAMES)}"
        ) from None


def make_standard(name: str, normalize: bool = True) -> Constellation:
    """Build one of the standard constellations with uniform priors.

    With ``normalize`` the points are scaled to unit average energy;
    otherwise QAM sets live on the odd-integer grid and PSK on the unit
    circle.
    """
    canon = _canonical(name)
    if canon == "BPSK":
        pts, labels = np.array([1.0 + 0j, -1.0 + 0j]), np.arange(2)
    elif canon == "QPSK":
        pts, labels = _square_qam(1)
    elif canon == "16-QAM":
        pts, labels = _square_qam(2)
    elif canon == "64-QAM":
        pts, labels = _square_qam(3)
    else:
        pts, labels = _psk(8)
    if normalize:
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(pts, name=canon, labels=labels)


def from_records(records: Sequence[dict], name: str = "custom") -> Constellation:
    """Build a constellation from ``{"re", "im", "prior"}`` records."""
    try:
        pts = [complex(float(r["re"]), float(r.get("im", 0.0))) for r in records]
        if all("prior" in r for r in records):
            priors = [float(r["prior"]) for r in records]
        elif any("prior" in r for r in records):
            raise ConfigurationError("either every record or none carries a prior")
        else:
            priors = None
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed constellation record: {exc}") from None
    return Constellation(pts, priors, name=name)


def load_json(path) -> Constellation:
    with open(path) as fh:
        return from_records(json.load(fh))


def moments(c: Constellation):
    """Return ``(mean, variance)`` of a symbol drawn from ``c``."""
    mean = complex(np.sum(c.priors * c.points))
    var = float(np.sum(c.priors * np.abs(c.points) ** 2) - abs(mean) ** 2)
    # single-point sets must report exactly zero
    if len(c) == 1 or np.count_nonzero(c.priors) == 1:
        var = 0.0
    return mean, max(var, 0.0)


def hard_decision(z, c: Constellation):
    """Nearest constellation point to ``z`` (lowest index wins ties).

    Accepts a scalar or an array; returns the same shape.
    """
    z = np.asarray(z, dtype=np.complex128)
    d = np.abs(z[..., None] - c.points) ** 2
    out = c.points[np.argmin(d, axis=-1)]
    return out[()] if out.ndim == 0 else out
