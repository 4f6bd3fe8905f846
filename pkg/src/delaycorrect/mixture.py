"""Exponential + normal mixture model for reporting delays.

Delays are measured in days. The exponential component is parameterised by
its mean (``scale``), the normal component by ``mu`` and ``sigma``.  Three CDF
flavours are provided:

* :func:`raw_mixture_cdf` -- the plain convex combination, defined on all reals.
* :func:`renormalized_cdf` -- the mixture restricted to ``[0, inf)`` and
  renormalised so that it is a proper delay distribution.
* :func:`truncated_cdf` -- the mixture restricted to ``[0, delta_max]``.

All functions accept scalars or numpy arrays for the delay argument.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np
from scipy.special import ndtr

DENOMINATOR_FLOOR = 1e-12


class ParameterError(ValueError):
    """Mixture parameters outside their valid range, or numerically degenerate."""


@dataclass(frozen=True)
class MixtureParams:
    alpha: float
    scale: float
    mu: float
    sigma: float

    def __post_init__(self):
        vals = astuple(self)
        if not all(np.isfinite(v) for v in vals):
            raise ParameterError(f"non-finite mixture parameters: {vals}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.scale <= 0.0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        if self.sigma <= 0.0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return astuple(self)


def _z(theta: MixtureParams, x):
    return (np.asarray(x, dtype=float) - theta.mu) / theta.sigma


def normal_cdf(x, mu: float, sigma: float):
    return ndtr((np.asarray(x, dtype=float) - mu) / sigma)


def _normal_mass(theta: MixtureParams, lo, hi):
    """P(lo < X <= hi) for the normal component, without catastrophic cancellation."""
    zlo, zhi = _z(theta, lo), _z(theta, hi)
    # in the upper tail both CDFs are ~1; use the survival form there
    upper = zlo > 0
    return np.where(upper, ndtr(-zlo) - ndtr(-zhi), ndtr(zhi) - ndtr(zlo))


def _exp_cdf(theta: MixtureParams, x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return -np.expm1(-x / theta.scale)


def _numerator(theta: MixtureParams, x):
    # mass of the [0, inf)-restricted (unnormalised) mixture on [0, x]
    return theta.alpha * _exp_cdf(theta, x) + (1 - theta.alpha) * _normal_mass(theta, 0.0, x)


def _positive_mass(theta: MixtureParams) -> float:
    return theta.alpha + (1 - theta.alpha) * float(ndtr(theta.mu / theta.sigma))


def _scalar_or_array(out, x):
    return float(out) if np.ndim(x) == 0 else out


def raw_mixture_cdf(theta: MixtureParams, delta):
    d = np.asarray(delta, dtype=float)
    out = theta.alpha * _exp_cdf(theta, d) + (1 - theta.alpha) * ndtr(_z(theta, d))
    return _scalar_or_array(out, delta)


def renormalized_cdf(theta: MixtureParams, delta):
    """Mixture CDF restricted to ``[0, inf)`` and renormalised.

    Negative delays map to 0.
    """
    denom = _positive_mass(theta)
    if denom < DENOMINATOR_FLOOR:
        raise ParameterError(f"renormalisation mass {denom:.3g} is degenerate for {theta}")
    d = np.asarray(delta, dtype=float)
    out = np.where(d <= 0, 0.0, _numerator(theta, np.maximum(d, 0.0)) / denom)
    return _scalar_or_array(np.minimum(out, 1.0), delta)


def survival(theta: MixtureParams, delta):
    """``1 - renormalized_cdf``, evaluated directly so far tails keep their precision."""
    denom = _positive_mass(theta)
    if denom < DENOMINATOR_FLOOR:
        raise ParameterError(f"renormalisation mass {denom:.3g} is degenerate for {theta}")
    d = np.maximum(np.asarray(delta, dtype=float), 0.0)
    out = (theta.alpha * np.exp(-d / theta.scale) + (1 - theta.alpha) * ndtr(-_z(theta, d))) / denom
    return _scalar_or_array(np.minimum(out, 1.0), delta)


def truncated_cdf(theta: MixtureParams, delta, delta_max: float):
    d = np.asarray(delta, dtype=float)
    if np.any(d > delta_max):
        raise ValueError(f"delta exceeds delta_max={delta_max}")
    denom = float(_numerator(theta, delta_max))
    if denom < DENOMINATOR_FLOOR:
        raise ParameterError(f"truncation mass {denom:.3g} on [0, {delta_max}] is degenerate for {theta}")
    out = np.where(d <= 0, 0.0, _numerator(theta, np.maximum(d, 0.0)) / denom)
    return _scalar_or_array(np.minimum(out, 1.0), delta)


def sample_delays(theta: MixtureParams, u, tol: float = 1e-9) -> np.ndarray:
    """Inverse-CDF sampling from :func:`renormalized_cdf` by vectorised bisection.

    ``u`` holds uniforms in ``[0, 1)``; the result has the same shape.
    """
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.full_like(u, max(50.0 * theta.scale, theta.mu + 40.0 * theta.sigma, 1.0))
    # grow the bracket for the (rare) quantiles beyond the initial guess
    while True:
        short = renormalized_cdf(theta, hi) < u
        if not np.any(short):
            break
        hi = np.where(short, hi * 2.0, hi)
    while np.max(hi - lo, initial=0.0) > tol:
        mid = 0.5 * (lo + hi)
        below = renormalized_cdf(theta, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi
