"""Compare the compiled stencil kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 32 64] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from leachsim import _kernels_py

try:
    from leachsim import _kernels
except ImportError:
    _kernels = None


def problem(n, seed=0):
    rng = np.random.default_rng(seed)
    shape = (n, n, n)
    faces = [rng.uniform(0.5, 1.5, shape) for _ in range(3)]
    diag = rng.uniform(0.01, 0.1, shape)
    b = rng.standard_normal(shape)
    return faces, diag, b


def bench(mod, n, repeat):
    faces, diag, b = problem(n)
    x = np.zeros_like(b)
    t_apply = min(timeit.repeat(lambda: mod.stencil_apply(*faces, diag, b), number=10, repeat=repeat)) / 10

    def solve():
        x[...] = 0.0
        return mod.stencil_pcg(*faces, diag, b, x, 1e-10, 2000)

    t_pcg = min(timeit.repeat(solve, number=1, repeat=repeat))
    its = solve()[0]
    return t_apply, t_pcg, its, x.copy()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'n':>4} {'backend':>9} {'apply [ms]':>11} {'pcg [s]':>9} {'iters':>6}")
    for n in args.n:
        rows = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])
        sols = {}
        for name, mod in rows:
            ta, tp, its, x = bench(mod, n, args.repeat)
            sols[name] = x
            print(f"{n:>4} {name:>9} {1e3 * ta:>11.3f} {tp:>9.3f} {its:>6}")
        if len(sols) == 2:
            diff = np.abs(sols["python"] - sols["compiled"]).max() / np.abs(sols["python"]).max()
            print(f"     relative solution difference {diff:.1e}")


if __name__ == "__main__":
    main()
