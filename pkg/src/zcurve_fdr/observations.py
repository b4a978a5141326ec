"""Reported p-values, confidence intervals, and their z-scale censoring intervals."""
from dataclasses import dataclass, field
import math
from typing import Mapping, Optional

from scipy.special import ndtr, ndtri

from .folded_normal import z_crit

EXACT = "exact"
ROUNDED = "rounded"
LESS_THAN = "less_than"
LESS_EQUAL = "less_equal"
STYLES = (EXACT, ROUNDED, LESS_THAN, LESS_EQUAL)


@dataclass(frozen=True)
class PValueReport:
    """A p-value as printed, with how it was printed.

    ``decimals`` is required for the ``rounded`` style. A rounded value of
    exactly 0 (``p = 0.000``) is accepted and later reinterpreted as an
    upper bound at half a unit in the last place.
    """

    value: float
    style: str = EXACT
    decimals: Optional[int] = None
    source_id: Optional[str] = None
    group_keys: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown p-value style {self.style!r}")
        v = self.value
        if self.style == ROUNDED:
            if self.decimals is None or int(self.decimals) < 1:
                raise ValueError("rounded reports need decimals >= 1")
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"p-value {v} outside [0, 1]")
            if abs(round(v, self.decimals) - v) > 1e-12:
                raise ValueError(f"{v} has more than {self.decimals} decimals")
        elif not 0.0 < v <= 1.0:
            raise ValueError(f"p-value {v} outside (0, 1]")


@dataclass(frozen=True)
class ZObservation:
    """Censoring interval ``[lo, hi]`` on the absolute z scale.

    ``lo == hi`` for exact reports; ``hi`` is ``inf`` for right-censored ones.
    """

    lo: float
    hi: float
    source_id: Optional[str] = None
    group_keys: Mapping[str, str] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi) or math.isnan(self.hi):
            raise ValueError(f"invalid z interval [{self.lo}, {self.hi}]")

    @property
    def exact(self):
        return self.lo == self.hi


@dataclass(frozen=True)
class ConfidenceIntervalReport:
    lower: float
    upper: float
    estimate: Optional[float] = None
    level: float = 0.95
    scale: str = "additive"
    source_id: Optional[str] = None
    group_keys: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.scale not in ("additive", "ratio"):
            raise ValueError(f"unknown CI scale {self.scale!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"CI level {self.level} outside (0, 1)")
        if self.scale == "ratio" and self.lower <= 0:
            raise ValueError("ratio-scale CI needs a positive lower bound")
        if not self.lower < self.upper:
            raise ValueError(f"CI bounds [{self.lower}, {self.upper}] must satisfy lower < upper")


def p_to_z(p, two_sided=True):
    """Absolute z-statistic with p-value ``p``.

    >>> round(p_to_z(0.05), 6)
    1.959964
    """
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p-value {p} outside (0, 1]")
    tail = p / 2.0 if two_sided else p
    # -ndtri(tail) stays accurate for tiny p where ndtri(1 - tail) would not
    return max(0.0, float(-ndtri(tail)))


def z_to_p(z, two_sided=True):
    tail = float(ndtr(-abs(z)))
    return 2.0 * tail if two_sided else tail


def _half_ulp(decimals):
    return 5.0 * 10.0 ** -(decimals + 1)


def to_z_observation(report, two_sided=True):
    """Map a p-value report to its z-scale censoring interval.

    Rounded reports cover ``value +/- half a unit in the last place``;
    inequality reports become right-censored at the printed ceiling.
    """
    meta = {"source_id": report.source_id, "group_keys": dict(report.group_keys)}
    if report.style == EXACT:
        z = p_to_z(report.value, two_sided)
        return ZObservation(z, z, **meta)
    if report.style == ROUNDED:
        h = _half_ulp(report.decimals)
        if report.value == 0.0:
            return ZObservation(p_to_z(h, two_sided), math.inf, note="rounded zero", **meta)
        p_lo = report.value - h
        p_hi = min(report.value + h, 1.0)
        hi = p_to_z(p_lo, two_sided) if p_lo > 0 else math.inf
        return ZObservation(p_to_z(p_hi, two_sided), hi, **meta)
    return ZObservation(p_to_z(report.value, two_sided), math.inf, **meta)


def ci_to_z(ci):
    """Convert a confidence interval into an exact z observation.

    The standard error is backed out of the interval width; a missing
    estimate defaults to the midpoint (geometric midpoint on the ratio scale).
    """
    lower, upper, estimate = ci.lower, ci.upper, ci.estimate
    note = ""
    if ci.scale == "ratio":
        if estimate is not None and estimate <= 0:
            raise ValueError("ratio-scale estimate must be positive")
        lower, upper = math.log(lower), math.log(upper)
        estimate = math.log(estimate) if estimate is not None else None
    width = upper - lower
    if not width > 0:
        raise ValueError("confidence interval has zero width")
    if estimate is None:
        estimate = 0.5 * (lower + upper)
        note = "estimate imputed at interval midpoint"
    se = width / (2.0 * z_crit(1.0 - ci.level))
    z = abs(estimate) / se
    return ZObservation(z, z, source_id=ci.source_id, group_keys=dict(ci.group_keys), note=note)


def significance_split(obs, alpha=0.05, two_sided=True):
    """Partition observations into significant, nonsignificant, and ambiguous.

    An interval straddling the critical value is ambiguous.
    """
    c = z_crit(alpha, two_sided)
    sig, nonsig, amb = [], [], []
    for o in obs:
        if o.lo >= c:
            sig.append(o)
        elif o.hi < c:
            nonsig.append(o)
        else:
            amb.append(o)
    return sig, nonsig, amb
