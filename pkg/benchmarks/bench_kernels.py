"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Reports the best-of-``repeat`` wall time per kernel and backend, the speedup,
and whether the two backends agree on the result.
"""
import argparse
import time

import numpy as np

from gibbsmix import _backend
from gibbsmix.expfam import ConjugateHyperparameters, GaussianKnownVariance, PoissonGamma
from gibbsmix.partition import GibbsPartitionModel
from gibbsmix.posterior import GibbsChainConfig, exact_joint_subset_dp, gibbs_sampler


def best_time(fn, repeat):
    out = None
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_logsums(backend, n):
    fam = GaussianKnownVariance(1, 1.0)
    hyp = ConjugateHyperparameters.make(fam, [0.0], 1.0)
    x = np.random.default_rng(0).normal(0, 2, n)
    model = GibbsPartitionModel.dirichlet(1.0)
    return lambda: exact_joint_subset_dp(model, fam, hyp, x, backend=backend).log_joint


def bench_minplus(backend, n):
    cost = np.random.default_rng(1).integers(0, 4, 1 << n).astype(np.int64)
    kern = _backend.get_kernels(backend)
    t = max(2, n // 3)
    return lambda: kern.partition_minplus(cost, n, t)[0]


def bench_gibbs(backend, n, sweeps):
    fam = PoissonGamma()
    hyp = ConjugateHyperparameters.make(fam, [1.0], 1.0)
    rng = np.random.default_rng(2)
    x = np.where(rng.random(n) < 0.5, rng.poisson(1, n), rng.poisson(5, n))
    cfg = GibbsChainConfig(seed=3, burn_in_sweeps=0, sample_sweeps=sweeps)
    model = GibbsPartitionModel.pitman_yor(0.3, 1.0)
    return lambda: gibbs_sampler(model, fam, hyp, x, cfg, backend=backend).traces


def same(a, b):
    if isinstance(a, np.ndarray):
        fin = np.isfinite(a)
        return bool(np.array_equal(fin, np.isfinite(b)) and np.allclose(a[fin], b[fin], rtol=1e-12))
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if _backend.BACKEND != "cython":
        raise SystemExit("compiled extension not available; build with "
                         "pip install -e . --no-build-isolation")
    if args.quick:
        cases = [("partition_logsums", "n=10", lambda b: bench_logsums(b, 10)),
                 ("partition_minplus", "n=10", lambda b: bench_minplus(b, 10)),
                 ("gibbs_sweeps", "n=50, 20 sweeps", lambda b: bench_gibbs(b, 50, 20))]
    else:
        cases = [("partition_logsums", "n=14", lambda b: bench_logsums(b, 14)),
                 ("partition_minplus", "n=13", lambda b: bench_minplus(b, 13)),
                 ("gibbs_sweeps", "n=200, 100 sweeps", lambda b: bench_gibbs(b, 200, 100))]
    print(f"{'kernel':<20}{'size':<20}{'cython [s]':>12}{'python [s]':>12}{'speedup':>10}  agree")
    for name, size, make in cases:
        tc, rc = best_time(make("cython"), args.repeat)
        tp, rp = best_time(make("python"), args.repeat)
        print(f"{name:<20}{size:<20}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {same(rc, rp)}")


if __name__ == "__main__":
    main()
