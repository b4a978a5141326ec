"""Simulation study: significant p-values with a known false discovery rate,
degraded by the reporting scenarios A-D, and scored against the estimator."""
from dataclasses import dataclass, field
import csv
import io
import math
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .estimands import soric_fdr
from .fit import FitConfig, InsufficientDataError, fit
from .folded_normal import z_crit
from .observations import EXACT, LESS_THAN, ROUNDED, PValueReport, to_z_observation

SCENARIOS = ("A", "B", "C", "D")
CEILINGS = (0.001, 0.01, 0.05)


@dataclass(frozen=True)
class PowerDistribution:
    """Distribution of power across simulated H1 tests.

    kind ``beta``: Beta(shape1, shape2) rescaled onto [alpha, 1).
    kind ``empirical``: resample ``values`` (e.g. read from a file).
    kind ``fixed``: every test has power ``value``.
    """

    kind: str = "beta"
    shape1: float = 2.0
    shape2: float = 5.0
    values: Optional[tuple] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind == "beta":
            if not (self.shape1 > 0 and self.shape2 > 0):
                raise ValueError("beta shapes must be positive")
        elif self.kind == "empirical":
            vals = np.asarray(self.values if self.values is not None else (), dtype=float)
            if vals.size == 0 or np.any((vals <= 0) | (vals >= 1)):
                raise ValueError("empirical powers must be a nonempty sample inside (0, 1)")
        elif self.kind == "fixed":
            if self.value is None or not 0 < self.value < 1:
                raise ValueError("fixed power must be in (0, 1)")
        else:
            raise ValueError(f"unknown power distribution {self.kind!r}")

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            vals = [float(tok) for line in fh for tok in line.replace(",", " ").split() if tok]
        return cls(kind="empirical", values=tuple(vals))

    def sample(self, rng, size, alpha=0.05):
        if self.kind == "beta":
            w = alpha + (1.0 - alpha) * rng.beta(self.shape1, self.shape2, size)
        elif self.kind == "empirical":
            w = rng.choice(np.asarray(self.values, dtype=float), size=size, replace=True)
        else:
            w = np.full(size, float(self.value))
        return np.clip(w, 1e-12, 1.0 - 1e-12)

    def describe(self):
        if self.kind == "beta":
            return f"beta({self.shape1:g},{self.shape2:g}) on [alpha,1)"
        if self.kind == "empirical":
            return f"empirical(n={len(self.values)})"
        return f"fixed({self.value:g})"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "A"
    n_significant: int = 2000
    alpha: float = 0.05
    fdr_grid: tuple = tuple(np.round(np.arange(0.0, 1.0 + 1e-9, 0.1), 10))
    power_dist: PowerDistribution = field(default_factory=PowerDistribution)
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.n_significant <= 0:
            raise ValueError("n_significant must be positive")
        if not self.fdr_grid or any(not 0.0 <= g <= 1.0 for g in self.fdr_grid):
            raise ValueError("FDR grid values must lie in [0, 1]")


def fdr_grid(step):
    """Grid 0, step, ..., 1 (1 is included when step divides it)."""
    if not step > 0 or step > 1:
        raise ValueError("grid step must be in (0, 1]")
    k = int(math.floor(1.0 / step + 1e-9))
    return tuple(float(round(i * step, 10)) for i in range(k + 1))


def noncentrality_for_power(w, alpha=0.05):
    """z-test noncentrality whose dominant-tail power is ``w`` (clipped at 0)."""
    c = z_crit(alpha)
    return np.maximum(c - ndtri(1.0 - np.asarray(w, dtype=float)), 0.0)


def sample_significant_p(true_fdr, n, power_dist, alpha, rng):
    """Draw ``n`` significant two-sided p-values, ``round(true_fdr * n)`` of them null.

    Null p-values are uniform on (0, alpha]. Alternative z-statistics are
    drawn from the folded normal at the noncentrality matching a sampled
    power, conditioned on significance by inverting the normal tail.
    """
    if not 0.0 <= true_fdr <= 1.0:
        raise ValueError("true_fdr must be in [0, 1]")
    if n < 0:
        raise ValueError("n must be nonnegative")
    n_false = int(math.floor(true_fdr * n + 0.5))
    n_true = n - n_false
    p_null = alpha * (1.0 - rng.random(n_false))

    c = z_crit(alpha)
    mu = noncentrality_for_power(power_dist.sample(rng, n_true, alpha), alpha)
    upper = ndtr(mu - c)
    lower = ndtr(-c - mu)
    take_upper = rng.random(n_true) * (upper + lower) < upper
    u = 1.0 - rng.random(n_true)
    # z = mu + isf(u * sf(c - mu)) on the upper tail; mirrored on the lower
    absz = np.where(
        take_upper,
        mu - ndtri(u * upper),
        -mu - ndtri(u * lower),
    )
    absz = np.maximum(absz, c)
    p_alt = 2.0 * ndtr(-absz)
    return np.concatenate([p_null, p_alt])


def _ceiling(p):
    for c in CEILINGS:
        if p <= c:
            return c
    return None


def apply_scenario(p, scenario, rng):
    """Turn exact p-values into reports degraded per scenario A-D.

    A exact; B all rounded to 3 decimals with p < .001 censored at .001;
    C 20% rounded to 2 decimals (0.00 censored at .01); D as C, then an
    independent 20% censored at the smallest ceiling in {.001, .01, .05}
    at or above p.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    p = np.asarray(p, dtype=float)
    n = p.size
    if scenario == "A":
        return [PValueReport(float(v), EXACT) for v in p]
    if scenario == "B":
        out = []
        for v in p:
            if v < 0.001:
                out.append(PValueReport(0.001, LESS_THAN))
            else:
                out.append(PValueReport(round(float(v), 3), ROUNDED, 3))
        return out

    round_sel = rng.random(n) < 0.2
    ceil_sel = rng.random(n) < 0.2 if scenario == "D" else np.zeros(n, dtype=bool)
    out = []
    for v, r, c in zip(p, round_sel, ceil_sel):
        v = float(v)
        ceiling = _ceiling(v) if c else None
        if ceiling is not None:
            out.append(PValueReport(ceiling, LESS_THAN))
        elif r:
            rv = round(v, 2)
            out.append(PValueReport(0.01, LESS_THAN) if rv == 0 else PValueReport(rv, ROUNDED, 2))
        else:
            out.append(PValueReport(v, EXACT))
    return out


def rmse_bias(estimates, truths):
    """RMSE and bias of estimates with delta-method standard errors."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0 or est.shape != tru.shape:
        raise ValueError("need equal, nonempty estimate and truth vectors")
    d = est - tru
    n = d.size
    rmse = float(np.sqrt(np.mean(d**2)))
    bias = float(np.mean(d))
    ddof = 1 if n > 1 else 0
    se_bias = float(np.std(d, ddof=ddof) / math.sqrt(n))
    se_rmse = float(np.std(d**2, ddof=ddof) / (2.0 * rmse * math.sqrt(n))) if rmse > 0 else 0.0
    return {"rmse": rmse, "bias": bias, "se_rmse": se_rmse, "se_bias": se_bias}


GRID_COLUMNS = (
    "scenario", "true_fdr", "estimated_fdr", "estimated_edr", "status",
    "n_used", "n_excluded", "n_exact", "n_rounded", "n_censored",
    "converged", "iterations",
)


@dataclass
class GridResult:
    config: ScenarioConfig
    points: list
    summary: dict

    @property
    def n_failed(self):
        return sum(1 for p in self.points if p["status"] != "ok")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=GRID_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in self.points:
            w.writerow({k: _fmt(p.get(k)) for k in GRID_COLUMNS})
        return buf.getvalue()

    def summary_dict(self):
        c = self.config
        return {
            "scenario": c.scenario,
            "n_significant": c.n_significant,
            "alpha": c.alpha,
            "grid": list(c.fdr_grid),
            "power_distribution": c.power_dist.describe(),
            "seed": c.seed,
            "n_points": len(self.points),
            "n_failed": self.n_failed,
            **self.summary,
        }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_point(config, index, fit_config=None):
    """Simulate, degrade, and fit one grid point; seeded by ``(seed, index)``."""
    true_fdr = float(config.fdr_grid[index])
    rng = np.random.default_rng([config.seed, index])
    p = sample_significant_p(true_fdr, config.n_significant, config.power_dist, config.alpha, rng)
    reports = apply_scenario(p, config.scenario, rng)
    obs = [to_z_observation(r) for r in reports]
    styles = [r.style for r in reports]
    row = {
        "scenario": config.scenario,
        "true_fdr": true_fdr,
        "n_exact": styles.count(EXACT),
        "n_rounded": styles.count(ROUNDED),
        "n_censored": styles.count(LESS_THAN),
    }
    try:
        res = fit(obs, fit_config, alpha_fit=config.alpha)
    except (InsufficientDataError, ValueError) as exc:
        row.update(status=f"failed: {exc}", estimated_fdr=None, estimated_edr=None)
        return row
    row.update(
        status="ok",
        estimated_fdr=soric_fdr(res.estimands.edr, config.alpha),
        estimated_edr=res.estimands.edr,
        n_used=res.n_used,
        n_excluded=res.n_excluded,
        converged=res.converged,
        iterations=res.iterations,
    )
    return row


def run_grid(config, fit_config=None):
    """Run every grid point and summarise RMSE and bias of the FDR estimates.

    Points are independent (each has its own seed stream), so the result is
    the same whatever order they run in.
    """
    fit_config = fit_config or FitConfig()
    points = [run_point(config, i, fit_config) for i in range(len(config.fdr_grid))]
    ok = [p for p in points if p["status"] == "ok"]
    if ok:
        summary = rmse_bias([p["estimated_fdr"] for p in ok], [p["true_fdr"] for p in ok])
    else:
        summary = {"rmse": None, "bias": None, "se_rmse": None, "se_bias": None}
    return GridResult(config, points, summary)
