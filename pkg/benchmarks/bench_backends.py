"""Time whole Gibbs chains on the compiled kernel and on the numpy sweep.

    python3 benchmarks/bench_backends.py [--sweeps 200] [--repeat 3]

For each problem size both backends run the same chain from the same
seed; the script reports the best-of-``repeat`` wall time, the speedup,
and the first sweep at which the two traces differ by more than 1e-6.
Both consume the generator identically, so they agree to rounding until
a rounding-level difference flips one accept/reject decision; from then
on they are two different, equally valid chains.
"""

import argparse
import time

import numpy as np

from frigibbs import AcquisitionConfig, GibbsConfig, NoiseSpec, add_noise, run_gibbs, synthesize_samples
from frigibbs._backend import compiled_available
from frigibbs.model import random_signal

SIZES = [(1, 30), (5, 30), (5, 100), (10, 100), (10, 250)]


def problem(K, N, seed=0):
    acq = AcquisitionConfig(5.0, 29.0 * K / 5 / (N - 1), N)
    sig = random_signal(np.random.default_rng(seed), K, acq.window, 2.0, (2.0 * K / 5, 6.0 * K / 5))
    y = add_noise(synthesize_samples(sig, acq), NoiseSpec(2.5 * K / 5, seed))
    return y, acq


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'K':>3} {'N':>4} {'python s':>10} {'compiled s':>11} {'speedup':>8} {'split at':>9}")
    for K, N in SIZES:
        y, acq = problem(K, N)
        cfg = GibbsConfig(K, burn_in=0, keep=args.sweeps, seed=1)
        t_py, (tr_py, _) = best_time(lambda: run_gibbs(y, acq, cfg, backend="python"), args.repeat)
        t_c, (tr_c, _) = best_time(lambda: run_gibbs(y, acq, cfg, backend="compiled"), args.repeat)
        diff = np.maximum(np.abs(tr_py.t - tr_c.t).max(axis=1), np.abs(tr_py.c - tr_c.c).max(axis=1))
        bad = np.nonzero(diff > 1e-6)[0]
        split = str(bad[0] + 1) if bad.size else "never"
        print(f"{K:>3} {N:>4} {t_py:>10.3f} {t_c:>11.4f} {t_py / t_c:>7.1f}x {split:>9}")


if __name__ == "__main__":
    main()
