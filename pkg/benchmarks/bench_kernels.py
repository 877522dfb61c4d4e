"""Compare the numba and pure-numpy Monte Carlo kernels.

    python3 benchmarks/bench_kernels.py --trials 1000000 --repeat 3

Both backends consume identical per-trial random streams, so the script also
checks that their tallies agree exactly.
"""
import argparse
import time

from ndphoton._accel import HAVE_NUMBA
from ndphoton.montecarlo import ProtocolConfig, run_batch


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = ProtocolConfig(n_trials=args.trials, seed=7)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for backend in backends:
        if backend == "numba":
            t0 = time.perf_counter()
            run_batch(cfg.replace(n_trials=1000), backend="numba")
            print(f"numba warm-up (compile or cache load): {time.perf_counter() - t0:.2f} s")
        dt, est = best_of(lambda: run_batch(cfg, backend=backend, workers=args.workers), args.repeat)
        results[backend] = est
        print(f"{backend:>6}: {dt:.3f} s  ({args.trials / dt / 1e6:.2f} M trials/s)  "
              f"eta_cond={est.eta_cond_hat.value:.5f}")
    if len(results) == 2:
        same = results["numpy"].counts == results["numba"].counts
        print("tallies identical:", same)


if __name__ == "__main__":
    main()
