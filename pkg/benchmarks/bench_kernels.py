"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--n 30] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from gpnqap.kernels import backends
from gpnqap.instances import random_qap_matrices


def cases(n, rng):
    d, f = random_qap_matrices(rng, n, 1)
    d, f = d[0], f[0]
    perm = rng.permutation(n).astype(np.intp)
    small_d, small_f = (m[0] for m in random_qap_matrices(rng, 8, 1))
    return {
        "qap_cost": lambda k: k.qap_cost(d, f, perm),
        "swap_delta x1000": lambda k: [k.swap_delta(d, f, perm, i % n, (i * 7 + 1) % n)
                                       for i in range(1000)],
        "two_opt": lambda k: k.two_opt(d, f, perm, 10_000),
        "brute_force_qap n=8": lambda k: k.brute_force_qap(small_d, small_f),
        "brute_force_tsp n=9": lambda k: k.brute_force_tsp(
            np.pad(small_d, ((0, 1), (0, 1)), constant_values=1.0)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    mods = backends()
    if "cython" not in mods:
        print("compiled backend not built; only the Python backend is available")
    work = cases(args.n, np.random.default_rng(0))
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in mods) + "   speedup")
    for label, fn in work.items():
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for name, mod in mods.items()}
        line = f"{label:<22}" + "".join(f"{t:>11.4f}s" for t in times.values())
        if len(times) == 2:
            line += f"   {times['python'] / times['cython']:8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
