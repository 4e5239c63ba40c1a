#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run after building the extension (pip install -e .):

    python3 bench_kernels.py [--level 5] [--repeats 20]

Exercises the hot kernels on a real assembled system: CSR matvec on the
flattened step matrix, P1 element-matrix computation, and one ILU(0)
factorization + triangular solve.
"""

import argparse
import time

import numpy as np

from raftsim import _kernels_py
from raftsim import kernels as active
from raftsim import raft_model, surface_fem, time_stepper
from raftsim.surface_mesh import build_refined_sphere


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--level", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    print(f"active backend: {active.BACKEND}")
    mesh = build_refined_sphere(args.level)
    fem = surface_fem.operators(mesh)
    params = raft_model.ModelParams()
    state = raft_model.initial_state(mesh, params, -0.5, 0.25, amplitude=1e-3, seed=1)
    template = time_stepper.SystemTemplate(fem, params, time_stepper.VARIANT_REDUCED)
    flat, _ = template.assemble(state, 1e-4)
    x = np.random.default_rng(0).standard_normal(flat.n)
    out = np.empty(flat.n)

    rows = [("kernel", "compiled-or-active", "numpy fallback", "speedup")]

    t_active = timeit(lambda: active.csr_matvec(flat.indptr, flat.indices,
                                                flat.data, x, out), args.repeats)
    t_py = timeit(lambda: _kernels_py.csr_matvec(flat.indptr, flat.indices,
                                                 flat.data, x, out), args.repeats)
    rows.append(("csr_matvec (n=%d, nnz=%d)" % (flat.n, flat.nnz),
                 f"{t_active*1e3:.2f} ms", f"{t_py*1e3:.2f} ms",
                 f"{t_py/t_active:.1f}x"))

    tri = np.ascontiguousarray(mesh.vertices[mesh.triangles])
    m = len(tri)
    mass = np.empty((m, 3, 3))
    stiff = np.empty((m, 3, 3))
    area = np.empty(m)
    t_active = timeit(lambda: active.p1_element_matrices(tri, mass, stiff, area),
                      args.repeats)
    t_py = timeit(lambda: _kernels_py.p1_element_matrices(tri, mass, stiff, area),
                  args.repeats)
    rows.append((f"p1_element_matrices ({m} triangles)",
                 f"{t_active*1e3:.2f} ms", f"{t_py*1e3:.2f} ms",
                 f"{t_py/t_active:.1f}x"))

    diag_pos = flat.diagonal_positions()
    repeats = max(1, args.repeats // 4)
    def factor(impl):
        data = flat.data.copy()
        impl.ilu0_factor(flat.indptr, flat.indices, data, diag_pos)
        return data
    t_active = timeit(lambda: factor(active), repeats)
    t_py = timeit(lambda: factor(_kernels_py), 1)
    rows.append(("ilu0_factor", f"{t_active*1e3:.2f} ms", f"{t_py*1e3:.2f} ms",
                 f"{t_py/t_active:.1f}x"))

    factored = factor(active)
    t_active = timeit(lambda: active.ilu0_solve(flat.indptr, flat.indices,
                                                factored, diag_pos, x, out),
                      args.repeats)
    t_py = timeit(lambda: _kernels_py.ilu0_solve(flat.indptr, flat.indices,
                                                 factored, diag_pos, x, out), 1)
    rows.append(("ilu0_solve", f"{t_active*1e3:.2f} ms", f"{t_py*1e3:.2f} ms",
                 f"{t_py/t_active:.1f}x"))

    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(val.ljust(w) for val, w in zip(r, widths)))


if __name__ == "__main__":
    main()
