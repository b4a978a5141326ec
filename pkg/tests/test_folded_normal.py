import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from zcurve_fdr.folded_normal import (
    TruncationWindow,
    folded_cdf,
    folded_pdf,
    folded_sf,
    log_likelihood_matrix,
    power,
    truncated_interval_prob,
    z_crit,
)

C05 = 1.959963984540054
Z_025 = 2.241402727604945
Z_015 = 2.432379058584447


def test_pdf_oracles():
    assert folded_pdf(0.0, 0.0) == pytest.approx(0.797884560802865, abs=1e-14)
    # phi(0) + phi(6)
    assert folded_pdf(3.0, 3.0) == pytest.approx(0.398942286477316, abs=1e-14)


def test_pdf_vectorized():
    z = np.array([0.0, 1.0, 2.0])
    out = folded_pdf(z, 1.0)
    assert out.shape == (3,)
    assert out[1] == pytest.approx(folded_pdf(1.0, 1.0))


def test_cdf_examples():
    assert folded_cdf(0.0, 2.0) == 0.0
    assert folded_cdf(math.inf, 2.0) == 1.0
    assert folded_cdf(C05, 0.0) == pytest.approx(0.95, abs=1e-14)
    assert folded_sf(C05, 0.0) == pytest.approx(0.05, abs=1e-14)


@pytest.mark.parametrize("bad", [(-0.1, 0.0), (1.0, -0.5), (float("nan"), 0.0)])
def test_domain(bad):
    with pytest.raises(ValueError):
        folded_pdf(*bad)
    with pytest.raises(ValueError):
        folded_cdf(*bad)


@pytest.mark.parametrize("mu", range(7))
def test_normalization(mu):
    total, _ = quad(folded_pdf, 0.0, 40.0, args=(float(mu),), epsabs=1e-13, epsrel=1e-13, points=[mu])
    assert total == pytest.approx(1.0, abs=1e-8)


@given(st.floats(0.01, 10.0), st.floats(0.0, 6.0))
def test_cdf_derivative_is_pdf(z, mu):
    h = 1e-5
    fd = (folded_cdf(z + h, mu) - folded_cdf(z - h, mu)) / (2 * h)
    assert fd == pytest.approx(folded_pdf(z, mu), abs=1e-6)


@given(st.floats(0.0, 12.0), st.floats(0.0, 6.0))
def test_cdf_monotone(z, mu):
    assert folded_cdf(z + 0.01, mu) >= folded_cdf(z, mu)


def test_power_oracles():
    assert power(0.0, 0.05) == pytest.approx(0.05, abs=1e-15)
    # at mu = c exactly: 0.5 + Phi(-2c)
    assert power(z_crit(0.05), 0.05) == pytest.approx(0.500044287719161, abs=1e-12)
    assert power(1.959964, 0.05) == pytest.approx(0.500044287719161, abs=1e-8)
    assert power(3.0, 0.05) == pytest.approx(0.850838768327056, abs=1e-12)
    assert power(3.92, 0.05) == pytest.approx(0.975004211606761, abs=1e-12)
    assert power(2.5, 0.05) == pytest.approx(0.705418001113800, abs=1e-12)
    assert power(6.0, 0.05) >= 0.9999


def test_power_is_folded_sf():
    c = z_crit(0.05)
    for mu in (0.0, 0.7, 2.2, 4.0):
        assert power(mu, 0.05) == pytest.approx(1.0 - folded_cdf(c, mu), abs=1e-14)


def test_power_strictly_increasing():
    mus = np.linspace(0.0, 8.0, 400)
    p = power(mus, 0.05)
    assert np.all(np.diff(p) > 0)


def test_power_one_sided():
    assert power(0.0, 0.05, two_sided=False) == pytest.approx(0.05)


def test_window():
    w = TruncationWindow.from_alpha(0.05)
    assert w.a == pytest.approx(C05) and w.b == math.inf
    with pytest.raises(ValueError):
        TruncationWindow(2.0, 1.0)


def test_whole_support_is_one():
    w = TruncationWindow(C05, 6.0)
    for mu in (0.0, 2.0, 5.0):
        assert truncated_interval_prob(w, (w.a, w.b), mu) == pytest.approx(1.0, abs=1e-14)


def test_interval_prob_oracle():
    # null component: P(.015 <= p <= .025) / .05 = .2 exactly
    w = TruncationWindow.from_alpha(0.05)
    assert truncated_interval_prob(w, (Z_025, Z_015), 0.0) == pytest.approx(0.2, abs=1e-12)


def test_degenerate_is_density():
    w = TruncationWindow.from_alpha(0.05)
    # 2 * phi(1.959964) / 0.05
    assert truncated_interval_prob(w, (w.a, w.a), 0.0) == pytest.approx(0.116890139610071 / 0.05, rel=1e-12)


def test_interval_errors():
    w = TruncationWindow(C05, 6.0)
    with pytest.raises(ValueError):
        truncated_interval_prob(w, (0.5, 1.0), 1.0)
    with pytest.raises(ValueError):
        truncated_interval_prob(w, (7.0, 7.0), 1.0)
    with pytest.raises(ValueError):
        truncated_interval_prob(w, (3.0, 2.0), 1.0)


def _quad_prob(lo, hi, mu, a, b):
    kw = dict(epsabs=1e-14, epsrel=1e-12, limit=200)
    num, _ = quad(folded_pdf, lo, hi, args=(mu,), **kw)
    den, _ = quad(folded_pdf, a, b, args=(mu,), points=[max(min(mu, b), a)], **kw)
    return num / den


def test_quadrature_oracle_randomized():
    rng = np.random.default_rng(2024)
    a, b = C05, 8.0
    w = TruncationWindow(a, b)
    worst = 0.0
    for _ in range(200):
        mu = rng.uniform(0.0, 6.0)
        lo, hi = np.sort(rng.uniform(a, b, 2))
        got = truncated_interval_prob(w, (lo, hi), mu)
        worst = max(worst, abs(got - _quad_prob(lo, hi, mu, a, b)))
    assert worst < 1e-8


@given(st.floats(0.0, 6.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_additive(mu, f1, f2):
    w = TruncationWindow(C05, 7.0)
    lo = w.a + f1 * (w.b - w.a) * 0.5
    hi = lo + f2 * (w.b - lo)
    mid = 0.5 * (lo + hi)
    parts = truncated_interval_prob(w, (lo, mid), mu) + truncated_interval_prob(w, (mid, hi), mu)
    assert parts == pytest.approx(truncated_interval_prob(w, (lo, hi), mu), abs=1e-10)


def test_far_tail_is_finite():
    w = TruncationWindow.from_alpha(0.05)
    m = log_likelihood_matrix([2.0, 30.0, 2.0], [2.0, 30.0, math.inf], [0.0, 6.0], w)
    assert np.all(np.isfinite(m))
    assert m[0, 1] < -5


def test_matrix_matches_scalar():
    w = TruncationWindow.from_alpha(0.05)
    lo = np.array([2.1, 2.2, 3.0])
    hi = np.array([2.1, 2.6, math.inf])
    m = log_likelihood_matrix(lo, hi, [0.0, 2.0, 4.0], w)
    for i in range(3):
        for j, mu in enumerate([0.0, 2.0, 4.0]):
            assert math.exp(m[i, j]) == pytest.approx(truncated_interval_prob(w, (lo[i], hi[i]), mu), rel=1e-12)


def test_matrix_rejects_outside_window():
    w = TruncationWindow.from_alpha(0.05)
    with pytest.raises(ValueError):
        log_likelihood_matrix([1.0], [1.0], [0.0], w)
