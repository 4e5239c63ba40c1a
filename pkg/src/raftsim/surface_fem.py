"""Linear Lagrange (P1) surface finite elements.

Assembly uses exact per-triangle closed forms on the affine surface
triangles; no curved-geometry lifting.  Heavy per-mesh objects (mass,
stiffness, lumped weights, assembly scatter maps) are cached per mesh in a
weak dictionary so the spec-level free functions stay cheap to call.
"""

import weakref

import numpy as np

from . import kernels
from .sparse_linalg import SparseMatrix


class NodalField:
    """Vertex-indexed coefficient vector for P1 elements on a fixed mesh."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(
                f"field length {values.shape} does not match mesh with {mesh.n_vertices} vertices"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        self.mesh = mesh
        self.values = values

    def copy(self):
        return NodalField(self.mesh, self.values.copy())


def _field_values(field):
    return field.values if isinstance(field, NodalField) else np.asarray(field, dtype=np.float64)


class FemOperators:
    """Per-mesh FEM workspace: M, K, lumped weights and assembly maps."""

    def __init__(self, mesh):
        self.mesh = mesh
        nt = mesh.n_triangles
        tri_xyz = np.ascontiguousarray(mesh.vertices[mesh.triangles])
        mass_loc = np.empty((nt, 3, 3))
        stiff_loc = np.empty((nt, 3, 3))
        areas = np.empty(nt)
        kernels.p1_element_matrices(tri_xyz, mass_loc, stiff_loc, areas)
        rows = np.repeat(mesh.triangles, 3, axis=1).reshape(-1)
        cols = np.tile(mesh.triangles, (1, 3)).reshape(-1)
        self._coo_rows = rows
        self._coo_cols = cols
        self.mass = SparseMatrix.from_coo(
            mesh.n_vertices, rows, cols, mass_loc.reshape(-1), symmetric=True
        )
        self.stiffness = SparseMatrix.from_coo(
            mesh.n_vertices, rows, cols, stiff_loc.reshape(-1), symmetric=True
        )
        # M and K are assembled from identical triplet positions, so they
        # share one sparsity pattern; steppers rely on that.
        self.lumped = np.asarray(
            np.bincount(self._coo_rows, weights=mass_loc.reshape(-1),
                        minlength=mesh.n_vertices)
        )
        self.diag_positions = self.mass.diagonal_positions()
        # scatter map: COO slot -> CSR data slot (for weighted re-assembly)
        self._csr_slots = self._build_csr_slots()

    def _build_csr_slots(self):
        rows, cols = self._coo_rows, self._coo_cols
        order = np.lexsort((cols, rows))
        slots = np.empty(len(rows), dtype=np.int64)
        rs, cs = rows[order], cols[order]
        new_group = np.empty(len(rs), dtype=bool)
        new_group[0] = True
        new_group[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        slots[order] = np.cumsum(new_group) - 1
        return slots

    def weighted_mass_data(self, w):
        """Data array (on the shared pattern) of int_Gamma I_h[w] chi_i chi_j.

        Local matrix is (A/60) (1 + delta_ij) (w_a + w_b + w_c + w_i + w_j).
        Used by the consistent-quadrature variant of the nonlinear terms.
        """
        tris = self.mesh.triangles
        wt = w[tris]                       # (nt, 3)
        s = wt.sum(axis=1)
        local = s[:, None, None] + wt[:, :, None] + wt[:, None, :]
        local = local * (self.mesh.tri_areas / 60.0)[:, None, None]
        local[:, np.arange(3), np.arange(3)] *= 2.0
        data = np.zeros(self.mass.nnz)
        np.add.at(data, self._csr_slots, local.reshape(-1))
        return data

    def integrate(self, field):
        c = _field_values(field)
        return float(self.lumped @ c)

    def h1_norm_sq(self, values):
        mv = self.mass.matvec(values)
        kv = self.stiffness.matvec(values)
        return float(values @ (mv + kv))


_CACHE = weakref.WeakKeyDictionary()


def operators(mesh):
    """Cached FemOperators for a mesh."""
    ops = _CACHE.get(mesh)
    if ops is None:
        ops = FemOperators(mesh)
        _CACHE[mesh] = ops
    return ops


def assemble_mass(mesh):
    """Consistent P1 mass matrix; symmetric, row sums add up to the area."""
    return operators(mesh).mass


def assemble_stiffness(mesh):
    """P1 stiffness (Laplace-Beltrami) matrix; SPD up to the constant kernel."""
    return operators(mesh).stiffness


def lumped_mass(mesh):
    """Row sums of the mass matrix: positive weights summing to the area."""
    return operators(mesh).lumped.copy()


def interpolate(mesh, f):
    """Lagrange interpolation: nodal values of a pointwise function.

    `f` may be vectorized over an (N, 3) coordinate array or accept a single
    3-vector.
    """
    verts = mesh.vertices
    try:
        values = np.asarray(f(verts), dtype=np.float64)
        if values.shape != (mesh.n_vertices,):
            raise TypeError
    except Exception:
        values = np.array([float(f(v)) for v in verts])
    bad = np.nonzero(~np.isfinite(values))[0]
    if len(bad):
        raise ValueError(f"non-finite interpolated value at vertex {int(bad[0])}")
    return NodalField(mesh, values)


def integrate(field, mesh):
    """Consistent-mass integral of a P1 field over the surface."""
    if isinstance(field, NodalField) and field.mesh is not mesh:
        raise ValueError("field does not belong to this mesh")
    return operators(mesh).integrate(field)


def error_norms(numeric, exact, mesh):
    """Relative errors of a discrete field against a pointwise function.

    e_inf: max-norm of (I_h exact - numeric) over the max-norm of I_h exact
    (vertex maxima).  e_1: full discrete H1 norm, x^T (M + K) x, of the
    difference relative to the same norm of I_h exact.
    """
    ops = operators(mesh)
    exact_field = interpolate(mesh, exact)
    num = _field_values(numeric)
    diff = exact_field.values - num
    denom_inf = float(np.abs(exact_field.values).max())
    if denom_inf == 0.0:
        raise ZeroDivisionError("exact solution vanishes at all vertices")
    e_inf = float(np.abs(diff).max()) / denom_inf
    denom_h1 = ops.h1_norm_sq(exact_field.values)
    if denom_h1 == 0.0:
        raise ZeroDivisionError("exact solution has zero H1 norm")
    e_1 = np.sqrt(ops.h1_norm_sq(diff) / denom_h1)
    return e_inf, float(e_1)
