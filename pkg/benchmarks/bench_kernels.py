"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--sizes 1024 16384] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from anderson_fp import kernels


def bench_kernels(sizes, repeat):
    rows = []
    for n in sizes:
        rng = np.random.default_rng(n)
        u_full = np.concatenate([[0.0], rng.uniform(0, 10, n - 1), [0.0]])
        sub = -np.ones(n - 2)
        diag = 2.0 + rng.random(n - 1)
        rhs = rng.standard_normal(n - 1)
        for name, mod in sorted(kernels.backends().items()):
            t_asm = min(timeit.repeat(lambda: mod.assemble_quasilinear(u_full, 1 / n, 1.01, 0.5, 0.1),
                                      number=20, repeat=repeat)) / 20
            t_tri = min(timeit.repeat(lambda: mod.thomas_solve(sub, diag, sub, rhs),
                                      number=20, repeat=repeat)) / 20
            rows.append((n, name, t_asm, t_tri))
    return rows


SOLVE_SNIPPET = """
import time, numpy as np
from anderson_fp import kernels
from anderson_fp.core import AndersonConfig, HistoryPolicy, solve
from anderson_fp.problems import QuasilinearSpec, quasilinear_problem
n = {n}
prob = quasilinear_problem(QuasilinearSpec(mesh_n=n))
cfg = AndersonConfig(depth_m=4, residual_tol=1e-5, max_iters=200, history_policy=HistoryPolicy.FLUSH_UNTIL_M)
t = time.perf_counter()
rep = solve(prob, np.zeros(n - 1), cfg)
print(kernels.BACKEND, rep.iterations, time.perf_counter() - t)
"""


def bench_solve(n):
    """Full m=4 quasilinear solve, once per backend (selected by environment)."""
    out = []
    for backend in ("compiled", "python"):
        env = dict(os.environ, ANDERSON_FP_KERNELS=backend)
        res = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=n)],
                             capture_output=True, text=True, env=env, check=True)
        name, iters, secs = res.stdout.split()
        out.append((name, int(iters), float(secs)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096, 16384])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'n':>7} {'backend':>9} {'assemble [us]':>14} {'thomas [us]':>12}")
    for n, name, ta, tt in bench_kernels(args.sizes, args.repeat):
        print(f"{n:>7} {name:>9} {ta * 1e6:>14.1f} {tt * 1e6:>12.1f}")
    n = max(args.sizes)
    print(f"\nquasilinear solve, m=4, mesh_n={n}:")
    for name, iters, secs in bench_solve(n):
        print(f"  {name:>9}: {iters} iterations in {secs:.3f} s")


if __name__ == "__main__":
    main()
