import numpy as np
import pytest

from zcurve_fdr import kernels
from zcurve_fdr import _pykernels
from zcurve_fdr.folded_normal import TruncationWindow, log_likelihood_matrix
from zcurve_fdr.fit import DEFAULT_MEANS

from .conftest import significant_z

try:
    from zcurve_fdr import _ckernels
except ImportError:  # compiled kernel not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])
needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernel not built")


def _lik(mu=2.5, n=600, seed=3):
    z = significant_z(mu, n, seed)
    m = log_likelihood_matrix(z, z, DEFAULT_MEANS, TruncationWindow.from_alpha(0.05))
    return np.exp(m - m.max(axis=1, keepdims=True))


def _uniform(k):
    return np.full(k, 1.0 / k)


def _trace(lik, iters):
    """Log-likelihood after each of ``iters`` plain EM steps."""
    w = _uniform(lik.shape[1])
    out = []
    for _ in range(iters):
        w, _ = _pykernels.em_step(lik, w, np.ones(lik.shape[0]))
        out.append(_pykernels.mixture_loglik(lik, w))
        assert abs(w.sum() - 1.0) < 1e-9 and w.min() >= 0.0
    return np.array(out)


def test_em_monotone_and_simplex():
    ll = _trace(_lik(), 300)
    assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[1:]))


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("accelerate", [False, True])
def test_contract(backend, accelerate):
    lik = _lik()
    w, ll, it, converged, monotone = backend.em_weights(lik, _uniform(lik.shape[1]), 10000, 1e-6, accelerate)
    assert converged and monotone
    assert abs(w.sum() - 1.0) < 1e-9 and w.min() >= 0.0
    assert ll == pytest.approx(backend.mixture_loglik(lik, w), abs=1e-9)
    assert 0 < it < 10000


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_acceleration_reaches_same_optimum(backend):
    lik = _lik(mu=3.0, seed=8)
    w0 = _uniform(lik.shape[1])
    plain = backend.em_weights(lik, w0, 200000, 1e-11, False)
    fast = backend.em_weights(lik, w0, 200000, 1e-11, True)
    assert fast[1] == pytest.approx(plain[1], abs=1e-6)
    assert fast[2] < plain[2]


@needs_c
@pytest.mark.parametrize("accelerate", [False, True])
def test_backends_agree(accelerate):
    lik = _lik(mu=1.5, seed=5)
    w0 = _uniform(lik.shape[1])
    # a fixed number of steps (tol 0 never stops early), since summation
    # order differs and can move the stopping iteration by one
    a = _pykernels.em_weights(lik, w0, 400, 0.0, accelerate)
    b = _ckernels.em_weights(lik, w0, 400, 0.0, accelerate)
    assert a[2] == b[2] == 400
    np.testing.assert_allclose(a[0], b[0], atol=1e-10)
    assert a[1] == pytest.approx(b[1], abs=1e-8)
    a = _pykernels.em_weights(lik, w0, 5000, 1e-9, accelerate)
    b = _ckernels.em_weights(lik, w0, 5000, 1e-9, accelerate)
    assert abs(a[2] - b[2]) <= 2 and a[3] and b[3]
    np.testing.assert_allclose(a[0], b[0], atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_counts_equal_repeated_rows(backend):
    lik = _lik(n=200)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 200, 200)
    rows, counts = np.unique(idx, return_counts=True)
    w0 = _uniform(lik.shape[1])
    rep = backend.em_weights(lik[idx], w0, 3000, 1e-9, False)
    cnt = backend.em_weights(lik[rows], w0, 3000, 1e-9, False, counts.astype(float))
    np.testing.assert_allclose(rep[0], cnt[0], atol=1e-10)
    assert rep[1] == pytest.approx(cnt[1], abs=1e-8)


def test_max_iter_reports_not_converged():
    lik = _lik()
    out = kernels.em_weights(lik, _uniform(lik.shape[1]), 3, 1e-12)
    assert out[2] == 3 and not out[3]


def test_single_component():
    lik = np.ones((10, 1))
    w, ll, _, converged, _ = kernels.em_weights(lik, np.array([1.0]), 100, 1e-9)
    assert w.tolist() == [1.0] and converged and ll == 0.0


def test_get_backend():
    assert kernels.get_backend("python") is _pykernels
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.BACKEND in ("python", "cython")
