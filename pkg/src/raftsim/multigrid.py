"""Geometric multigrid preconditioner for the monolithic step systems.

The sphere generators keep their subdivision hierarchy: parent vertices
keep their indices and every midpoint vertex knows its parent edge, so
prolongation is the canonical P1 interpolation (copy parents, average the
edge endpoints) and restriction its transpose.  Coarse operators are
Galerkin products R A P recomputed from the current fine matrix each step
(rediscretized coarse operators destabilize the cycle for this
nonsymmetric system).  One V-cycle with damped per-vertex block-Jacobi
smoothing preconditions the outer BiCGStab; since everything is rebuilt
from the current values, nothing ages and no sparse refactorization is
needed.
"""

import numpy as np
import scipy.linalg
import scipy.sparse

from . import kernels


def _interleaved_prolongation(fine_mesh, k):
    """P1 prolongation for k interleaved fields: (k n_f) x (k n_c)."""
    n_c = fine_mesh.coarser.n_vertices
    n_f = fine_mesh.n_vertices
    edges = fine_mesh.parent_edges
    rows = []
    cols = []
    vals = []
    for f in range(k):
        parent = np.arange(n_c, dtype=np.int64)
        rows.append(parent * k + f)
        cols.append(parent * k + f)
        vals.append(np.ones(n_c))
        new = n_c + np.arange(len(edges), dtype=np.int64)
        for side in (0, 1):
            rows.append(new * k + f)
            cols.append(edges[:, side] * k + f)
            vals.append(np.full(len(edges), 0.5))
    p = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(k * n_f, k * n_c))
    return p, p.T.tocsr()


def _clamped_inverse(blocks, margin=1e-2):
    k = blocks.shape[1]
    scale = np.abs(blocks).max(axis=(1, 2))
    scale = np.maximum(scale, 1e-300)
    if k == 2:
        adj = np.empty_like(blocks)
        adj[:, 0, 0] = blocks[:, 1, 1]
        adj[:, 1, 1] = blocks[:, 0, 0]
        adj[:, 0, 1] = -blocks[:, 0, 1]
        adj[:, 1, 0] = -blocks[:, 1, 0]
        det = (blocks[:, 0, 0] * blocks[:, 1, 1]
               - blocks[:, 0, 1] * blocks[:, 1, 0])
    elif k == 3:
        a = blocks
        adj = np.empty_like(a)
        adj[:, 0, 0] = a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1]
        adj[:, 0, 1] = a[:, 0, 2] * a[:, 2, 1] - a[:, 0, 1] * a[:, 2, 2]
        adj[:, 0, 2] = a[:, 0, 1] * a[:, 1, 2] - a[:, 0, 2] * a[:, 1, 1]
        adj[:, 1, 0] = a[:, 1, 2] * a[:, 2, 0] - a[:, 1, 0] * a[:, 2, 2]
        adj[:, 1, 1] = a[:, 0, 0] * a[:, 2, 2] - a[:, 0, 2] * a[:, 2, 0]
        adj[:, 1, 2] = a[:, 0, 2] * a[:, 1, 0] - a[:, 0, 0] * a[:, 1, 2]
        adj[:, 2, 0] = a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0]
        adj[:, 2, 1] = a[:, 0, 1] * a[:, 2, 0] - a[:, 0, 0] * a[:, 2, 1]
        adj[:, 2, 2] = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        det = (a[:, 0, 0] * adj[:, 0, 0] + a[:, 0, 1] * adj[:, 1, 0]
               + a[:, 0, 2] * adj[:, 2, 0])
    else:
        return np.linalg.inv(blocks)
    floor = margin * scale ** k
    det_safe = np.where(np.abs(det) >= floor,
                        det, np.where(det >= 0.0, 1.0, -1.0) * floor)
    return adj / det_safe[:, None, None]


class _Level:
    __slots__ = ("op", "prolong", "restrict", "block_inv", "coarse_lu",
                 "diag_rows", "diag_fields", "indptr64", "indices64")

    def __init__(self):
        self.op = None
        self.prolong = None
        self.restrict = None
        self.block_inv = None
        self.coarse_lu = None
        self.diag_rows = None
        self.diag_fields = None
        self.indptr64 = None
        self.indices64 = None


class MultigridPreconditioner:
    """V-cycle over the mesh subdivision hierarchy.

    update() wraps the template's current fine matrix, forms the Galerkin
    chain and the smoother blocks; __call__(r) applies one V(nu, nu) cycle.
    """

    def __init__(self, fine_template, coarse_max=400, omega=0.7, nu=2):
        self.template = fine_template
        self.omega = omega
        self.nu = nu
        self.k = fine_template.k
        self.levels = [_Level()]
        mesh = fine_template.fem.mesh
        n_unknowns = self.k * mesh.n_vertices
        while mesh.coarser is not None and n_unknowns > coarse_max:
            level = self.levels[-1]
            level.prolong, level.restrict = _interleaved_prolongation(mesh, self.k)
            mesh = mesh.coarser
            n_unknowns = self.k * mesh.n_vertices
            self.levels.append(_Level())

    def update(self):
        """Rebuild the Galerkin chain from the template's current values.

        The cycle operates on the row-equilibrated system (the same one the
        outer Krylov iteration solves); equilibration keeps the per-vertex
        smoother blocks well conditioned.
        """
        scaled = self.template._scaled
        a = scipy.sparse.csr_matrix((scaled.data, scaled.indices, scaled.indptr),
                                    shape=(scaled.n, scaled.n))
        for depth, level in enumerate(self.levels):
            level.op = a
            last = depth == len(self.levels) - 1
            if last:
                level.coarse_lu = scipy.linalg.lu_factor(a.toarray())
            else:
                if level.indptr64 is None:
                    # sparsity is step-independent, cast the index arrays once
                    level.indptr64 = a.indptr.astype(np.int64)
                    level.indices64 = a.indices.astype(np.int64)
                level.block_inv = self._invert_diag_blocks(level)
                a = (level.restrict @ a @ level.prolong).tocsr()

    def _invert_diag_blocks(self, level):
        k = self.k
        a = level.op
        if level.diag_rows is None:
            coo = a.tocoo()
            mask = (coo.row // k) == (coo.col // k)
            level.diag_rows = np.nonzero(mask)[0]
            level.diag_fields = (coo.row[mask] // k, coo.row[mask] % k,
                                 coo.col[mask] % k)
        blocks = np.zeros((a.shape[0] // k, k, k))
        vi, fi, gj = level.diag_fields
        # pattern is fixed across steps, so the cached COO slots stay valid
        np.add.at(blocks, (vi, fi, gj), a.data[level.diag_rows])
        # adjugate-based inverse with the determinant clamped away from
        # zero: in spinodal regions the lagged negative curvature makes some
        # vertex blocks genuinely indefinite and, at unlucky tau, singular;
        # clamping caps the local gain while preserving the direction
        return _clamped_inverse(blocks)


    def _smooth(self, level, x, b, reverse):
        """Collective (per-vertex block) Gauss-Seidel sweeps."""
        for _ in range(self.nu):
            kernels.block_gs_sweep(level.indptr64, level.indices64,
                                   level.op.data, level.block_inv, x, b,
                                   1 if reverse else 0)
        return x

    def _cycle(self, depth, b):
        level = self.levels[depth]
        if depth == len(self.levels) - 1:
            return scipy.linalg.lu_solve(level.coarse_lu, b)
        x = self._smooth(level, np.zeros_like(b), b, reverse=False)
        residual = b - level.op @ x
        x = x + level.prolong @ self._cycle(depth + 1, level.restrict @ residual)
        return self._smooth(level, x, b, reverse=True)

    def __call__(self, r):
        return self._cycle(0, r)
