# Compiled EM kernel. Must match _pykernels.em_weights / mixture_loglik.
# The two matrix-vector products per step go to BLAS; the compiled part
# removes the per-iteration interpreter overhead.
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs, sqrt
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

cdef double _TINY = 1e-300


cdef void _mix(const double[:, ::1] L, const double[::1] w, double[::1] mix) noexcept nogil:
    # mix = L @ w. A C-ordered (n, k) array is a column-major (k, n) one,
    # so this is its transpose times w.
    cdef char trans = b'T'
    cdef int m = <int>L.shape[1], n = <int>L.shape[0], inc = 1
    cdef double one = 1.0, zero = 0.0
    dgemv(&trans, &m, &n, &one, <double*>&L[0, 0], &m, <double*>&w[0], &inc,
          &zero, &mix[0], &inc)


cdef double _loglik(const double[:, ::1] L, const double[::1] w,
                    const double[::1] c, double[::1] mix) noexcept nogil:
    cdef Py_ssize_t i
    cdef double total = 0.0
    _mix(L, w, mix)
    for i in range(L.shape[0]):
        total += c[i] * log(mix[i] if mix[i] > _TINY else _TINY)
    return total


cdef double _step(const double[:, ::1] L, const double[::1] w, const double[::1] c,
                  double[::1] out, double[::1] mix) noexcept nogil:
    # one EM update of w into out; returns the log-likelihood at w
    cdef Py_ssize_t n = L.shape[0], k = L.shape[1], i, j
    cdef double s, ll = 0.0, norm = 0.0, one = 1.0, zero = 0.0
    cdef char trans = b'N'
    cdef int m = <int>k, nn = <int>n, inc = 1
    _mix(L, w, mix)
    for i in range(n):
        s = mix[i] if mix[i] > _TINY else _TINY
        ll += c[i] * log(s)
        mix[i] = c[i] / s
    # out = L.T @ (c / mix)
    dgemv(&trans, &m, &nn, &one, <double*>&L[0, 0], &m, &mix[0], &inc,
          &zero, &out[0], &inc)
    for j in range(k):
        out[j] = w[j] * out[j]
        norm += out[j]
    for j in range(k):
        out[j] = out[j] / norm
        if out[j] < _TINY:
            out[j] = 0.0
    return ll


def _counts(n, counts):
    if counts is None:
        return np.ones(n)
    return np.ascontiguousarray(counts, dtype=np.float64)


def mixture_loglik(lik, weights, counts=None):
    cdef const double[:, ::1] L = np.ascontiguousarray(lik, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] c = _counts(L.shape[0], counts)
    return _loglik(L, w, c, np.empty(L.shape[0]))


def em_weights(lik, weights, long max_iter, double tol, bint accelerate=False, counts=None):
    cdef const double[:, ::1] L = np.ascontiguousarray(lik, dtype=np.float64)
    cdef const double[::1] c = _counts(L.shape[0], counts)
    cdef Py_ssize_t k = L.shape[1], j
    w_arr = np.array(weights, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef double[::1] w1 = np.empty(k)
    cdef double[::1] w2 = np.empty(k)
    cdef double[::1] cand = np.empty(k)
    cdef double[::1] nxt = np.empty(k)
    cdef double[::1] mix = np.empty(L.shape[0])
    cdef double ll, prev = 0.0, gain, rr, vv, r, v, step, norm, ll_cand
    cdef bint have_prev = False, monotone = True, converged = False, feasible
    cdef long it = 0

    with nogil:
        while it < max_iter:
            ll = _step(L, w, c, w1, mix)
            if have_prev:
                gain = ll - prev
                if gain < -1e-9 * (fabs(ll) if fabs(ll) > 1.0 else 1.0):
                    monotone = False
                if fabs(gain) < tol:
                    converged = True
                    break
            prev = ll
            have_prev = True
            if accelerate:
                _step(L, w1, c, w2, mix)
                rr = 0.0
                vv = 0.0
                for j in range(k):
                    r = w1[j] - w[j]
                    v = w2[j] - w1[j] - r
                    rr += r * r
                    vv += v * v
                for j in range(k):
                    nxt[j] = w2[j]
                if vv > 0.0:
                    step = -sqrt(rr / vv)
                    if step > -1.0:
                        step = -1.0
                    while True:
                        feasible = True
                        for j in range(k):
                            r = w1[j] - w[j]
                            v = w2[j] - w1[j] - r
                            cand[j] = w[j] - 2.0 * step * r + step * step * v
                            if cand[j] <= 0.0:
                                feasible = False
                        if feasible or step >= -1.0:
                            break
                        # backtrack toward step -1 rather than clip to zero
                        step = 0.5 * (step - 1.0) if step < -1.01 else -1.0
                    norm = 0.0
                    for j in range(k):
                        if cand[j] < 0.0:
                            cand[j] = 0.0
                        norm += cand[j]
                    for j in range(k):
                        cand[j] = cand[j] / norm
                    ll_cand = _step(L, cand, c, w2, mix)
                    if ll_cand >= ll:
                        for j in range(k):
                            nxt[j] = w2[j]
                for j in range(k):
                    w[j] = nxt[j]
            else:
                for j in range(k):
                    w[j] = w1[j]
            it += 1
        ll = _loglik(L, w, c, mix)
        if not converged and have_prev and fabs(ll - prev) < tol:
            converged = True

    return w_arr, ll, it, bool(converged), bool(monotone)
