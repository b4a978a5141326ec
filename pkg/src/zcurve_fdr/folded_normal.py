"""Folded normal kernel on the absolute z scale.

A component with mean ``mu`` (unit variance) describes ``|Z|`` for
``Z ~ N(mu, 1)``. Truncation to a window ``[a, b]`` models selection for
significance; censoring intervals model rounded and inequality reports.

Normal tail functions come from :mod:`scipy.special` (``ndtr``,
``log_ndtr``), which are accurate to double precision far into the tails.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ValueError("z must be >= 0")
    return z


def _check_mu(mu):
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0) or np.any(np.isnan(mu)):
        raise ValueError("mu must be >= 0")
    return mu


def z_crit(alpha, two_sided=True):
    """Critical |z| for level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    tail = alpha / 2.0 if two_sided else alpha
    return float(-ndtri(tail))


def folded_pdf(z, mu):
    """Density of ``|N(mu, 1)|`` at ``z``."""
    z, mu = _check_z(z), _check_mu(mu)
    out = np.exp(-0.5 * (z - mu) ** 2 - _LOG_SQRT_2PI) + np.exp(-0.5 * (z + mu) ** 2 - _LOG_SQRT_2PI)
    return _scalar(out)


def folded_cdf(z, mu):
    """P(|N(mu, 1)| <= z)."""
    z, mu = _check_z(z), _check_mu(mu)
    with np.errstate(invalid="ignore"):
        out = ndtr(z - mu) - ndtr(-z - mu)
    out = np.where(np.isinf(z), 1.0, out)
    return _scalar(out)


def folded_sf(z, mu):
    """P(|N(mu, 1)| > z), computed from the tails to avoid cancellation."""
    z, mu = _check_z(z), _check_mu(mu)
    return _scalar(ndtr(mu - z) + ndtr(-z - mu))


def log_folded_sf(z, mu):
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        return np.logaddexp(log_ndtr(mu - z), log_ndtr(-z - mu))


def log_folded_pdf(z, mu):
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return np.logaddexp(-0.5 * (z - mu) ** 2, -0.5 * (z + mu) ** 2) - _LOG_SQRT_2PI


def log_interval_prob(lo, hi, mu):
    """log P(lo < |N(mu, 1)| <= hi), broadcasting; ``hi`` may be +inf."""
    log_lo = log_folded_sf(lo, mu)
    log_hi = log_folded_sf(hi, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(log_hi - log_lo)
        out = log_lo + np.log1p(-np.minimum(ratio, 1.0))
    return np.where(np.isneginf(log_hi), log_lo, out)


def power(mu, alpha, two_sided=True):
    """Rejection probability of a z-test with noncentrality ``mu``.

    Two-sided: ``1 - Phi(c - mu) + Phi(-c - mu)`` with ``c`` the critical
    value, i.e. the folded survival function at ``c``.
    """
    mu = _check_mu(mu)
    c = z_crit(alpha, two_sided)
    if two_sided:
        return _scalar(ndtr(mu - c) + ndtr(-c - mu))
    return _scalar(ndtr(mu - c))


@dataclass(frozen=True)
class TruncationWindow:
    """Support ``[a, b]`` of the truncated components (``b`` may be inf)."""

    a: float
    b: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.a < self.b):
            raise ValueError(f"invalid truncation window [{self.a}, {self.b}]")

    @classmethod
    def from_alpha(cls, alpha, upper=math.inf, two_sided=True):
        return cls(z_crit(alpha, two_sided), upper)

    def log_mass(self, mu):
        return log_interval_prob(self.a, self.b, mu)


def truncated_interval_prob(window, interval, mu):
    """Probability of ``interval`` under the component truncated to ``window``.

    A degenerate interval ``(z, z)`` returns the truncated *density* at
    ``z`` instead; callers must keep the two cases apart.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if hi < lo:
        raise ValueError(f"interval [{lo}, {hi}] is reversed")
    mu = float(_check_mu(mu))
    lo_c, hi_c = max(lo, window.a), min(hi, window.b)
    if lo == hi:
        if not window.a <= lo <= window.b:
            raise ValueError(f"point {lo} lies outside the truncation window")
        return float(np.exp(log_folded_pdf(lo, mu) - window.log_mass(mu)))
    if not lo_c < hi_c:
        raise ValueError(f"interval [{lo}, {hi}] does not intersect the truncation window")
    return float(np.exp(log_interval_prob(lo_c, hi_c, mu) - window.log_mass(mu)))


def log_likelihood_matrix(lo, hi, means, window):
    """Log likelihood of each observation under each truncated component.

    Parameters
    ----------
    lo, hi : array_like, shape (n,)
        Censoring interval ends; ``lo == hi`` marks an exact observation.
    means : array_like, shape (J,)
    window : TruncationWindow

    Returns
    -------
    ndarray, shape (n, J)
    """
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    mu = np.asarray(means, dtype=float)[None, :]
    exact = lo == hi
    if np.any(lo < window.a) or np.any(np.where(exact, lo > window.b, lo >= window.b)):
        raise ValueError("observation outside the truncation window")
    log_mass = window.log_mass(mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        interval = log_interval_prob(lo, np.minimum(hi, window.b), mu)
    point = log_folded_pdf(lo, mu)
    return np.where(exact, point, interval) - log_mass
