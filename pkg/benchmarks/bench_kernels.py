"""Timing comparison of the compiled and pure-numpy kernel backends.

Runs the two hot paths (relative value iteration and batch simulation)
on a fixed-design model and on the pruned integrated state space, once
per backend, and prints best-of-N wall times with the speedup ratio.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5] [--horizon 2e5]
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from parmaint import _kernels
from parmaint.ctmdp import build_model
from parmaint.mdp_solve import fully_active_policy, solve_average_cost
from parmaint.model import load_instance
from parmaint.sim import simulate_policy

ROOT = pathlib.Path(__file__).resolve().parents[1]


def best_of(repeats, fn):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--instance", default=str(ROOT / "instances" / "base-6-20.json")
    )
    parser.add_argument("--penalty", type=float, default=1000.0)
    parser.add_argument("--horizon", type=float, default=2e5)
    parser.add_argument("--batches", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    instance = load_instance(args.instance)
    cases = [
        ("fixed design (0,5,0,0)", build_model(instance, (0, 5, 0, 0))),
        ("pruned integrated space", build_model(instance)),
    ]
    backends = ["numpy"]
    if _kernels.USING_NUMBA:
        backends.insert(0, "numba")
    else:
        print("numba unavailable; timing the numpy backend only\n")

    print(f"repeats: {args.repeats} (best shown); penalty {args.penalty:g}; "
          f"horizon {args.horizon:g} x {args.batches} batches\n")
    header = f"{'workload':<42}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'ratio':>10}"
    print(header)
    print("-" * len(header))

    for label, model in cases:
        policy = fully_active_policy(model)
        rows = {
            f"{label}: solve ({model.n_states} states)": lambda b, m=model: (
                solve_average_cost(m, args.penalty, backend=b)
            ),
            f"{label}: simulate": lambda b, m=model, p=policy: simulate_policy(
                m, p, horizon=args.horizon, batches=args.batches, backend=b
            ),
        }
        for name, call in rows.items():
            times = []
            for backend in backends:
                call(backend)  # warm up (JIT compile on first numba call)
                times.append(best_of(args.repeats, lambda: call(backend)))
            line = f"{name:<42}" + "".join(f"{t:>11.4f}s" for t in times)
            if len(times) == 2:
                line += f"{times[1] / times[0]:>9.2f}x"
            print(line)


if __name__ == "__main__":
    main()
