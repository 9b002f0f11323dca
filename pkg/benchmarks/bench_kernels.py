"""Numba vs numpy timings for the edge kernels and for one end-to-end solve.

    python3 benchmarks/bench_kernels.py [--sizes 50 200 800] [--repeat 20]

Kernel timings run both implementations in one process. The end-to-end
solve runs in a subprocess per backend, selected by GRAPH_CSH_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from graph_csh import _kernels
from graph_csh.graph import random_connected_graph

SOLVE_SNIPPET = """
import time, numpy as np
from graph_csh import ProblemData, random_connected_graph, solve_csh, BACKEND
g = random_connected_graph({n}, 7)
rng = np.random.default_rng(0)
f = -(0.5 + rng.uniform(-0.1, 0.1, g.vertex_count))
pd = ProblemData.create(g, 1.0, f, {p})
solve_csh(pd)  # warm-up (numba compilation, Poincare cache)
t = time.perf_counter(); rep = solve_csh(pd); dt = time.perf_counter() - t
print(BACKEND, dt, rep.residual_sup)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(sizes, repeat, p):
    nb = dict(zip(("p_laplacian", "gradient_energy", "edge_weights", "neg_dlap"), _kernels._build_numba()))
    np_impl = {
        "p_laplacian": _kernels.p_laplacian_np,
        "gradient_energy": _kernels.gradient_energy_np,
        "edge_weights": _kernels.edge_weights_np,
        "neg_dlap": _kernels.neg_dlap_np,
    }
    print(f"kernel timings, p={p} (best of {repeat}, microseconds)")
    print(f"{'n':>6} {'edges':>7} {'kernel':>16} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n in sizes:
        g = random_connected_graph(n, 1, extra_edge_prob=min(0.3, 8.0 / n))
        u = np.random.default_rng(n).standard_normal(n)
        tau = _kernels.equal_value_threshold(u)
        for name in np_impl:
            args = (u, g._ei, g._ej, p) if name == "gradient_energy" else (u, g._ei, g._ej, p, tau)
            a = np.asarray(np_impl[name](*args))
            b = np.asarray(nb[name](*args))
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"backend mismatch in {name} at n={n}")
            t_np = best_of(lambda: np_impl[name](*args), repeat)
            t_nb = best_of(lambda: nb[name](*args), repeat)
            print(f"{n:>6} {g.edge_count:>7} {name:>16} {1e6 * t_np:>10.1f} {1e6 * t_nb:>10.1f} {t_np / t_nb:>8.1f}")


def solve_table(n, p):
    print(f"\nend-to-end solve_csh, random graph n={n}, p={p}")
    for flag in ("0", "1"):
        env = dict(os.environ, GRAPH_CSH_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=n, p=p)],
                             env=env, capture_output=True, text=True, check=True)
        backend, dt, res = out.stdout.split()
        print(f"{backend:>6}: {float(dt):8.3f} s  residual {float(res):.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 800])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--solve-n", type=int, default=12)
    args = ap.parse_args()
    kernel_table(args.sizes, args.repeat, args.p)
    solve_table(args.solve_n, args.p)


if __name__ == "__main__":
    main()
