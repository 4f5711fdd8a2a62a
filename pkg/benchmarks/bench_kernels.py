"""Compare the compiled and numpy assembly kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Reports per-call time of the edge kernel for several grid sizes and the
wall time of a full simulation with each backend.
"""

import argparse
import time

import numpy as np

from monoflow import dynamics as dy, fixtures as fx, kernels


def time_kernel(mod, kind, n, repeat):
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.5, 2.0, n + 1)
    old = rho.copy()
    bufs = [np.empty(n) for _ in range(3)] + [np.empty(n - 1) for _ in range(4)]
    c0, c1 = {0: (1.0, 0.0), 1: (0.5, 2.0), 2: (1.0, 1e-2)}[kind]
    mod.assemble_edge(kind, c0, c1, rho, old, 0.1, 0.01, 0.0, *bufs)
    start = time.perf_counter()
    for _ in range(repeat):
        mod.assemble_edge(kind, c0, c1, rho, old, 0.1, 0.01, 0.0, *bufs)
    return (time.perf_counter() - start) / repeat


def time_simulation(mod, repeat):
    rng = np.random.default_rng(1)
    g = fx.random_graph(rng).refined(4)
    s = fx.random_scenario(g, rng)
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        dy.solve_ivp(dy.DiscreteSystem(g, s, s.dt, kernel=mod))
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()
    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled_available():
        backends["cython"] = kernels.get_backend("cython")
    else:
        print("compiled kernels not built; timing the numpy backend only")
    print(f"{'kind':>6} {'cells':>6} " + " ".join(f"{name + ' [us]':>14}" for name in backends) + "   speedup")
    for kind, label in ((0, "heat"), (1, "porous"), (2, "gas")):
        for n in (10, 100, 1000):
            t = {name: time_kernel(mod, kind, n, args.repeat) for name, mod in backends.items()}
            speed = t["python"] / t["cython"] if "cython" in t else float("nan")
            print(f"{label:>6} {n:>6} " + " ".join(f"{1e6 * v:14.2f}" for v in t.values()) + f"   {speed:7.1f}x")
    t = {name: time_simulation(mod, 3) for name, mod in backends.items()}
    print("full simulation: " + ", ".join(f"{name} {v:.3f} s" for name, v in t.items()))


if __name__ == "__main__":
    main()
