"""Compare the numba and pure-numpy sweep backends on an annual QSTS run.

Usage:

    python benchmarks/bench_backends.py [--buses 200] [--steps 8760] [--repeat 3]

Selects each backend via the GRIDIMPACT_BACKEND environment variable, exactly
as a user would, and reports wall time per run plus steps/second. The first
numba run includes JIT compilation; a warmup solve is done outside the timed
region so the numbers reflect steady-state throughput.
"""

import argparse
import os
import time

import numpy as np

from gridimpact.evfleet import DemandProfile
from gridimpact.powerflow import HAVE_NUMBA, run_qsts
from gridimpact.synth import random_feeder


def build_case(n_buses: int):
    net = random_feeder(n_buses, seed=200)
    rng = np.random.default_rng(9)
    shapes = {}
    for load in net.loads[: max(1, len(net.loads) // 4)]:
        values = rng.uniform(0.2, 2.0, 24) * load.kw
        shapes[load.id] = DemandProfile(dt_h=1.0, values_kw=values,
                                        energy_kwh=float(np.sum(values)))
    return net, shapes


def bench(backend: str, net, shapes, steps: int, repeat: int) -> list[float]:
    os.environ["GRIDIMPACT_BACKEND"] = backend
    run_qsts(net, shapes, steps=24)  # warmup / JIT compile
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = run_qsts(net, shapes, steps=steps)
        times.append(time.perf_counter() - start)
        assert all(s.converged for s in result.solutions)
    return times


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--buses", type=int, default=200)
    parser.add_argument("--steps", type=int, default=8760)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    net, shapes = build_case(args.buses)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"{args.buses} buses, {args.steps} steps, {len(shapes)} shaped loads, "
          f"best of {args.repeat}\n")
    print(f"{'backend':<8} {'best [s]':>10} {'mean [s]':>10} {'steps/s':>12}")
    for backend in backends:
        times = bench(backend, net, shapes, args.steps, args.repeat)
        best = min(times)
        print(f"{backend:<8} {best:>10.3f} {np.mean(times):>10.3f} "
              f"{args.steps / best:>12.0f}")
    if not HAVE_NUMBA:
        print("\nnumba not importable: only the numpy fallback was benchmarked")


if __name__ == "__main__":
    main()
