"""Compiled vs numpy kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5] [--edges 5]

Times the two hot loops on the golden scenario: the per-edge receding-horizon
gain iteration (one cold-start solve and a full 7 s closed loop) and the
neighbor descent rounds.
"""

import argparse
import statistics
import time
import warnings

import numpy as np

from edgeform import kernels
from edgeform.edge_game import edge_components, zero_gains
from edgeform.input_mapping import _csr
from edgeform.scenario import golden_scenario
from edgeform.sim import simulate_edge_controller


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def cases(sc):
    w = sc.edge_weights()
    topo = sc.topology
    M, n, T = topo.num_edges, topo.spatial_dim, sc.horizon
    zm = edge_components(sc.initial_edge_state(), M, n)
    K0, k0 = zero_gains(M, n, T)
    solve_args = (zm, K0, k0, w.dt, w.alpha, w.beta, w.terminal_alpha, w.terminal_beta, w.d,
                  float(w.r), float(w.epsilon), w.R, sc.gain_tol, sc.t_max)
    ptr, inc = _csr(topo)
    src = np.array([s for s, _ in topo.edges], dtype=np.int64)
    dst = np.array([t for _, t in topo.edges], dtype=np.int64)
    a = np.random.default_rng(0).normal(size=(M, n))
    u0 = np.zeros((topo.num_nodes, n))
    gamma = float(sc.resolved_gamma())
    return {
        "edge_solve (cold start)": lambda b: kernels.edge_solve(*solve_args, backend=b),
        "descent_rounds (200)": lambda b: kernels.descent_rounds(u0, a, src, dst, ptr, inc, gamma, 200, 0.0,
                                                                 backend=b),
        "closed loop 7 s": lambda b: simulate_edge_controller(sc, backend=b),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")
    warnings.simplefilter("ignore", RuntimeWarning)
    sc = golden_scenario()
    print(f"{'case':<26}" + "".join(f"{b + ' best [ms]':>22}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(sc).items():
        row = [_best(lambda: fn(b), args.repeat)[0] for b in backends]
        speed = f"{row[0] / row[1]:>9.1f}x" if len(row) == 2 else ""
        print(f"{name:<26}" + "".join(f"{1e3 * t:>22.3f}" for t in row) + speed)


if __name__ == "__main__":
    main()
