"""Discovery rates, false discovery risk, and replication quantities."""
from dataclasses import asdict, dataclass
import math
from typing import Optional

import numpy as np

from .folded_normal import power


@dataclass(frozen=True)
class EstimandSet:
    edr: float
    fdr: float
    err: float
    alpha: float
    odr: Optional[float] = None
    fdr_raw: Optional[float] = None

    @property
    def selection_bias_index(self):
        """ODR minus EDR; positive values indicate selection for significance."""
        return None if self.odr is None else self.odr - self.edr

    @property
    def selection_bias_ratio(self):
        return None if self.odr is None else self.odr / self.edr

    def to_dict(self):
        d = asdict(self)
        d["selection_bias_index"] = self.selection_bias_index
        d["selection_bias_ratio"] = self.selection_bias_ratio
        return d


def soric_fdr_raw(discovery_rate, alpha):
    if not 0.0 < discovery_rate <= 1.0:
        raise ValueError(f"discovery rate must be in (0, 1], got {discovery_rate}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    # one division of two products, so DR = alpha gives exactly 1
    return ((1.0 - discovery_rate) * alpha) / (discovery_rate * (1.0 - alpha))


def soric_fdr(discovery_rate, alpha=0.05):
    """Maximum false discovery rate compatible with a discovery rate.

    Soric's bound, attained when every true effect is detected. Clamped to
    [0, 1]; a zero discovery rate is rejected.

    >>> round(soric_fdr(0.30, 0.05), 6)
    0.122807
    """
    return min(1.0, max(0.0, soric_fdr_raw(discovery_rate, alpha)))


def _post_selection(model):
    """Component powers and post-selection weights, including the power-1
    component that stands in for observations above a finite upper bound."""
    pw = np.asarray(power(np.asarray(model.means), model.alpha_fit, model.two_sided), dtype=float)
    w = np.asarray(model.weights, dtype=float)
    k = model.mass_above
    if k > 0:
        pw = np.append(pw, 1.0)
        w = np.append((1.0 - k) * w, k)
    return w, pw


def edr(model):
    """Expected discovery rate before selection.

    Post-selection weights are deflated by component power, so the
    pre-selection mean power is the weighted harmonic mean of the powers.
    """
    w, pw = _post_selection(model)
    return float(1.0 / np.sum(w / pw))


def err(model):
    """Expected replication rate: mean power of the significant studies."""
    w, pw = _post_selection(model)
    return float(np.sum(w * pw))


def odr(n_significant, n_total):
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    if not 0 <= n_significant <= n_total:
        raise ValueError("n_significant must lie in [0, n_total]")
    return n_significant / n_total


def estimand_set(model, n_significant=None, n_total=None):
    d = edr(model)
    return EstimandSet(
        edr=d,
        fdr=soric_fdr(d, model.alpha_fit),
        err=err(model),
        alpha=model.alpha_fit,
        odr=odr(n_significant, n_total) if n_total else None,
        fdr_raw=soric_fdr_raw(d, model.alpha_fit),
    )


def theoretical_discovery_rate(prior_true, power_true, alpha=0.05):
    """Share of tests that come out significant given the true-hypothesis rate."""
    for name, v in (("prior_true", prior_true), ("power_true", power_true), ("alpha", alpha)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be a probability")
    return prior_true * power_true + (1.0 - prior_true) * alpha


@dataclass(frozen=True)
class ReplicationDecomposition:
    power_true_replications: float
    p_false_positive_replicates: float


def replication_decomposition(err_value, fdr, alpha=0.05):
    """Split the expected replication rate into true and false discoveries.

    Solves ``err = (1 - fdr) * power_true + fdr * alpha`` for ``power_true``.
    """
    if not fdr < 1.0:
        raise ValueError("fdr must be < 1")
    p_fp = fdr * alpha
    power_true = (err_value - p_fp) / (1.0 - fdr)
    if not (0.0 <= power_true <= 1.0 and 0.0 <= p_fp <= 1.0):
        raise ValueError(
            f"inconsistent inputs: implied power of true replications is {power_true:.4f}"
        )
    return ReplicationDecomposition(power_true, p_fp)


def false_negative_share(err_value, fdr, alpha=0.05):
    """Share of nonsignificant replications that test a true hypothesis."""
    dec = replication_decomposition(err_value, fdr, alpha)
    miss_true = (1.0 - fdr) * (1.0 - dec.power_true_replications)
    miss_false = fdr * (1.0 - alpha)
    return miss_true / (miss_true + miss_false)


@dataclass
class AlphaAdjustment:
    target_fdr: float
    alpha_star: Optional[float]
    per_alpha: list

    def to_dict(self):
        return {"target_fdr": self.target_fdr, "alpha_star": self.alpha_star, "per_alpha": self.per_alpha}


def adjust_alpha(obs, target_fdr, alpha_grid, fit_config=None):
    """Search ``alpha_grid`` (descending) for the largest alpha whose fitted
    false discovery risk is at most ``target_fdr``.

    Each alpha gets its own fit, since the truncation point moves with it.
    Grid points with too few surviving observations are kept in
    ``per_alpha`` with ``status='insufficient data'``.
    """
    from .fit import InsufficientDataError, fit

    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("alpha grid is empty")
    if any(not 0.0 < a < 1.0 for a in grid):
        raise ValueError("alpha grid values must be in (0, 1)")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly descending")
    obs = list(obs)
    rows = []
    alpha_star = None
    for a in grid:
        try:
            res = fit(obs, fit_config, alpha_fit=a)
        except InsufficientDataError as exc:
            rows.append({"alpha": a, "edr": None, "fdr": None, "status": "insufficient data", "detail": str(exc)})
            continue
        e = res.estimands
        rows.append({"alpha": a, "edr": e.edr, "fdr": e.fdr, "status": "ok", "n_used": res.n_used})
        if alpha_star is None and e.fdr <= target_fdr:
            alpha_star = a
    return AlphaAdjustment(target_fdr, alpha_star, rows)


def soric_consistent(es, tol=1e-12):
    return math.isclose(es.fdr, soric_fdr(es.edr, es.alpha), abs_tol=tol)
