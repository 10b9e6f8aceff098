"""Time the colony with numba kernels vs the plain Python fallback.

    python benchmarks/bench_kernels.py [--graphs 20] [--iterations 200]

Each path runs in its own interpreter because the JIT flag is read at import.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, sys, time
import numpy as np
from offload_aco import _jit
from offload_aco.aco_solver import AcoParams, solve
from offload_aco.cost_sim import random_measured_graph

graphs, iters = int(sys.argv[1]), int(sys.argv[2])
ds = [random_measured_graph(np.random.default_rng(s), 10)[1] for s in range(graphs)]
solve(ds[0], AcoParams(n_iterations=2))  # compile / warm caches
t0 = time.perf_counter()
fronts = [sorted(solve(d, AcoParams(seed=s, n_iterations=iters)).costs()) for s, d in enumerate(ds)]
print(json.dumps({"jit": _jit.USE_NUMBA, "seconds": time.perf_counter() - t0, "fronts": fronts}))
"""


def run(flag: str, graphs: int, iters: int) -> dict:
    env = {**os.environ, "OFFLOAD_ACO_JIT": flag}
    out = subprocess.run([sys.executable, "-c", WORKER, str(graphs), str(iters)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--graphs", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=200)
    args = ap.parse_args()
    fast = run("1", args.graphs, args.iterations)
    slow = run("0", args.graphs, args.iterations)
    print(f"{'path':<10}{'seconds':>10}{'per solve ms':>15}")
    for name, r in (("numba", fast), ("python", slow)):
        print(f"{name:<10}{r['seconds']:>10.3f}{1000 * r['seconds'] / args.graphs:>15.2f}")
    print(f"speedup x{slow['seconds'] / fast['seconds']:.1f}; identical fronts: {fast['fronts'] == slow['fronts']}")


if __name__ == "__main__":
    main()
