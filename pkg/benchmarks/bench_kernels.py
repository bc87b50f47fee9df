"""Time the cascade-walk kernel on its numba and numpy paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads mirror what the optimizers run: one threshold sweep per
architecture for two- and three-stage cascades, plus a full grid search
with each backend (the numpy run goes through a subprocess with
CASCADEOPT_NO_NUMBA=1 so module-level dispatch is exercised too).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from cascadeopt import _kernels
from cascadeopt.cascade_eval import theta_lattice

GRID_SNIPPET = """
import time
from cascadeopt import presets, _kernels
from cascadeopt.baselines import grid_search
from cascadeopt.bo import OptimizationProblem
from cascadeopt.cascade_eval import EnergyMin
from cascadeopt.profile_store import generate_synthetic
ds = generate_synthetic(presets.benchmark_spec(), presets.benchmark_space())
p = OptimizationProblem(EnergyMin(presets.BENCHMARK_BOUND))
grid_search(p, ds, keep_cloud=False)  # warm trace cache and jit
ds._traces.clear()
t = time.perf_counter()
r = grid_search(p, ds, keep_cloud=False)
print(_kernels.USING_NUMBA, time.perf_counter() - t, repr(r.best_objective))
"""


def workload(M, n, T, seed=0):
    rng = np.random.default_rng(seed)
    margins = rng.random((M - 1, n))
    losses = rng.integers(0, 2, (M, n)).astype(np.int64)
    return margins, losses, theta_lattice(T, M)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-grid", action="store_true")
    args = ap.parse_args(argv)

    if _kernels.walk_counts_numba is None:
        sys.exit("numba path unavailable (not installed or CASCADEOPT_NO_NUMBA set)")

    cases = [("M=2, 400 images, T=101", 2, 400, 101), ("M=3, 400 images, T=21", 3, 400, 21), ("M=3, 2000 images, T=51", 3, 2000, 51)]
    print(f"{'workload':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  identical")
    for label, M, n, T in cases:
        data = workload(M, n, T)
        _kernels.walk_counts_numba(*data)  # compile outside the timed region
        t_nb, a = best_of(_kernels.walk_counts_numba, data, args.repeat)
        t_np, b = best_of(_kernels.walk_counts_numpy, data, args.repeat)
        same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        print(f"{label:28s} {t_nb * 1e3:10.3f} {t_np * 1e3:10.3f} {t_np / t_nb:8.1f}  {same}")

    if not args.skip_grid:
        print("\nfull grid search, benchmark space (840 architectures x 101 thresholds)")
        for flag in ("0", "1"):
            env = {**os.environ, "CASCADEOPT_NO_NUMBA": flag}
            out = subprocess.run([sys.executable, "-c", GRID_SNIPPET], env=env, capture_output=True, text=True, check=True)
            numba_on, secs, best = out.stdout.split()
            name = "numba" if numba_on == "True" else "numpy"
            print(f"  {name:6s} {float(secs):7.3f} s   optimum {best} mJ")


if __name__ == "__main__":
    main()
