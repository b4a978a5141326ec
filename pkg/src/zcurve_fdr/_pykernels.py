"""Pure numpy EM kernel; the reference the compiled kernel is checked against."""
import numpy as np

_TINY = 1e-300


def _counts(lik, counts):
    if counts is None:
        return np.ones(lik.shape[0])
    return np.asarray(counts, dtype=float)


def mixture_loglik(lik, weights, counts=None):
    """Sum over rows of ``counts * log(lik @ weights)`` for a row-scaled likelihood matrix."""
    lik = np.asarray(lik, dtype=float)
    mix = np.maximum(lik @ np.asarray(weights, dtype=float), _TINY)
    return float(_counts(lik, counts) @ np.log(mix))


def em_step(lik, w, counts):
    """One EM update; returns ``(new_weights, loglik at w)``."""
    mix = np.maximum(lik @ w, _TINY)
    new = w * ((counts / mix) @ lik)
    new /= new.sum()
    # flush weights that have decayed to subnormal range; they are zero in
    # effect and subnormal arithmetic is very slow
    new[new < _TINY] = 0.0
    return new, float(counts @ np.log(mix))


def _is_drop(gain, ll):
    return gain < -1e-9 * max(1.0, abs(ll))


def em_weights(lik, weights, max_iter, tol, accelerate=False, counts=None):
    """Run weights-only EM on a fixed likelihood matrix.

    Parameters
    ----------
    lik : ndarray, shape (n, J)
        Per-observation component likelihoods, each row scaled so its
        maximum is 1 (the caller keeps the log scale factors).
    weights : ndarray, shape (J,)
        Starting mixture weights on the simplex.
    max_iter : int
        Cap on iterations (an accelerated iteration counts once).
    tol : float
        Stop once the log-likelihood gain drops below ``tol``.
    accelerate : bool
        Use SQUAREM extrapolation. The extrapolated point is kept only if
        its log-likelihood is no lower than the current one, so the
        sequence stays nondecreasing.
    counts : ndarray, shape (n,), optional
        Row multiplicities (all ones by default). A bootstrap resample
        passes its distinct rows with counts instead of repeated rows.

    Returns
    -------
    weights, loglik, iterations, converged, monotone
        ``loglik`` is evaluated at the returned weights. ``monotone`` is
        False if any iteration lowered the log-likelihood beyond rounding.
    """
    lik = np.ascontiguousarray(lik, dtype=float)
    c = _counts(lik, counts)
    w = np.array(weights, dtype=float)
    prev = None
    monotone = True
    converged = False
    it = 0
    while it < max_iter:
        w1, ll = em_step(lik, w, c)
        if prev is not None:
            gain = ll - prev
            if _is_drop(gain, ll):
                monotone = False
            if abs(gain) < tol:
                converged = True
                break
        prev = ll
        if accelerate:
            w2 = em_step(lik, w1, c)[0]
            r = w1 - w
            v = w2 - w1 - r
            vv = float(v @ v)
            w_next = w2
            if vv > 0.0:
                step = min(-np.sqrt(float(r @ r) / vv), -1.0)
                cand = w - 2.0 * step * r + step * step * v
                # a zero weight can never recover under EM, so backtrack
                # toward step -1 (which lands on w2) instead of clipping
                while cand.min() <= 0.0 and step < -1.0:
                    step = 0.5 * (step - 1.0) if step < -1.01 else -1.0
                    cand = w - 2.0 * step * r + step * step * v
                cand = np.maximum(cand, 0.0)
                cand /= cand.sum()
                stabilized, ll_cand = em_step(lik, cand, c)
                if ll_cand >= ll:
                    w_next = stabilized
            w = w_next
        else:
            w = w1
        it += 1
    ll = mixture_loglik(lik, w, c)
    if not converged and prev is not None and abs(ll - prev) < tol:
        converged = True
    return w, ll, it, converged, monotone
