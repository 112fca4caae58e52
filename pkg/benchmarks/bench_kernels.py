"""Time the compiled and pure-Python kernels on identical inputs.

    python benchmarks/bench_kernels.py [--n 14] [--trials 200000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hiring._backend import available_backends, get_backend
from hiring.core import Instance
from hiring.exact import optimal_exact
from hiring.simulate import flatten, uniforms


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=14)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    inst = Instance(rng.uniform(0, 1, args.n), rng.uniform(0, 1, args.n), args.k, args.n)
    tree = optimal_exact(inst).tree
    fp = flatten(tree)
    U = uniforms(args.seed, 0, args.trials, fp.width)
    probs = np.asarray(inst.probs)
    values = np.asarray(inst.values)

    results = {}
    for name in available_backends():
        kern = get_backend(name)
        t_dp, (V, _) = best_of(lambda: kern.exact_table(list(inst.values), list(inst.probs), inst.k, inst.T), args.repeat)
        t_mc, r = best_of(lambda: kern.simulate_blocks(fp.ptr, fp.apps, fp.left, fp.right, fp.coin, probs, values,
                                                       inst.k, inst.T, fp.root, U), args.repeat)
        results[name] = (t_dp, t_mc, V, r)

    print(f"n={args.n} k={args.k} trials={args.trials} (best of {args.repeat})")
    print(f"{'backend':<8} {'exact_table [s]':>16} {'simulate [s]':>14}")
    for name, (t_dp, t_mc, _, _) in results.items():
        print(f"{name:<8} {t_dp:>16.4f} {t_mc:>14.4f}")
    if len(results) == 2:
        (tp_dp, tp_mc, Vp, rp), (tc_dp, tc_mc, Vc, rc) = results["python"], results["cython"]
        print(f"speedup  {tp_dp / tc_dp:>15.1f}x {tp_mc / tc_mc:>13.1f}x")
        print(f"outputs identical: {np.array_equal(Vp, Vc) and np.array_equal(rp, rc)}")


if __name__ == "__main__":
    main()
