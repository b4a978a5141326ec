"""Compare the compiled and numpy EM kernels.

Runs each backend, with and without SQUAREM acceleration, on the same
row-scaled likelihood matrices, then times a short bootstrap end to end.

    python3 benchmarks/bench_em.py [--sizes 200 1000 5000] [--repeat 3]
"""
import argparse
import time

import numpy as np

import zcurve_fdr as zc
from zcurve_fdr import kernels
from zcurve_fdr.fit import DEFAULT_MEANS
from zcurve_fdr.folded_normal import TruncationWindow, log_likelihood_matrix


def likelihood(n, seed=0):
    """Row-scaled likelihood for ``n`` significant z-values from a spread of means."""
    rng = np.random.default_rng(seed)
    c = zc.p_to_z(0.05)
    z = np.empty(0)
    while z.size < n:
        draw = np.abs(rng.normal(rng.choice([0.0, 1.5, 2.5, 4.0], 4 * n), 1.0))
        z = np.concatenate([z, draw[draw >= c]])
    z = z[:n]
    m = log_likelihood_matrix(z, z, DEFAULT_MEANS, TruncationWindow.from_alpha(0.05))
    return np.exp(m - m.max(axis=1, keepdims=True))


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def kernel_table(sizes, repeat, backends):
    w0 = np.full(len(DEFAULT_MEANS), 1.0 / len(DEFAULT_MEANS))
    print(f"{'n':>6} {'backend':>8} {'squarem':>8} {'iters':>7} {'loglik':>14} {'ms':>9} {'us/iter':>8}")
    for n in sizes:
        lik = likelihood(n)
        for accel in (True, False):
            base = None
            for name in backends:
                em = kernels.get_backend(name).em_weights
                secs, (w, ll, it, conv, mono) = best_time(lambda: em(lik, w0, 100000, 1e-6, accel), repeat)
                base = base or secs
                print(
                    f"{n:6d} {name:>8} {str(accel):>8} {it:7d} {ll:14.6f} {1e3 * secs:9.2f} "
                    f"{1e6 * secs / max(it, 1):8.1f}  x{base / secs:.2f}"
                )


def bootstrap_table(n, replicates, backends):
    rng = np.random.default_rng(1)
    c = zc.p_to_z(0.05)
    draw = np.abs(rng.normal(2.5, 1.0, 20 * n))
    obs = [zc.ZObservation(v, v) for v in draw[draw >= c][:n]]
    saved = kernels.em_weights
    print(f"\nbootstrap: n={n}, {replicates} replicates")
    try:
        for name in backends:
            kernels.em_weights = kernels.get_backend(name).em_weights
            t = time.perf_counter()
            b = zc.bootstrap(obs, replicates=replicates, seed=0)
            lo, hi = b.intervals["edr"]
            print(f"{name:>8}: {time.perf_counter() - t:7.2f} s  EDR interval [{lo:.4f}, {hi:.4f}]")
    finally:
        kernels.em_weights = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 5000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--replicates", type=int, default=50)
    args = ap.parse_args()
    backends = ["cython", "python"]
    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled kernel not built; timing the numpy kernel only")
        backends = ["python"]
    print(f"default backend: {kernels.BACKEND}\n")
    kernel_table(args.sizes, args.repeat, backends)
    bootstrap_table(1000, args.replicates, backends)


if __name__ == "__main__":
    main()
