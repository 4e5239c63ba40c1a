# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR matrix-vector product and P1 element matrices.

Single-threaded by design so results are bit-reproducible; the per-row
accumulation order matches the pure-python backend.
"""

from libc.math cimport sqrt
from libc.stdint cimport int64_t


def csr_matvec(const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] data, const double[::1] x,
               double[::1] out):
    """out <- A @ x for a CSR matrix with int64 index arrays."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc
    return out


def block_gs_sweep(const int64_t[::1] indptr, const int64_t[::1] indices,
                   const double[::1] data, const double[:, :, ::1] block_inv,
                   double[::1] x, const double[::1] b, int reverse):
    """One collective Gauss-Seidel sweep for a vertex-interleaved system.

    Vertices are visited in order (or reversed); each visit solves the local
    k x k block exactly (block_inv holds the inverses) using the latest
    neighbor values.
    """
    cdef Py_ssize_t n_blocks = block_inv.shape[0]
    cdef int k = <int> block_inv.shape[1]
    cdef Py_ssize_t i, f, g, row, jj
    cdef Py_ssize_t start, stop, step
    cdef double acc
    cdef double r[8]
    if reverse:
        start = n_blocks - 1; stop = -1; step = -1
    else:
        start = 0; stop = n_blocks; step = 1
    i = start
    while i != stop:
        for f in range(k):
            row = i * k + f
            acc = b[row]
            for jj in range(indptr[row], indptr[row + 1]):
                acc -= data[jj] * x[indices[jj]]
            r[f] = acc
        for f in range(k):
            acc = 0.0
            for g in range(k):
                acc += block_inv[i, f, g] * r[g]
            x[i * k + f] += acc
        i += step
    return None


def ilu0_factor(const int64_t[::1] indptr, const int64_t[::1] indices,
                double[::1] data, const int64_t[::1] diag_pos):
    """In-place ILU(0) factorization of a CSR matrix (IKJ ordering).

    Unit lower factor in the strictly-lower slots, U (with diagonal) in the
    remaining slots.  Near-zero pivots are replaced by a scaled epsilon;
    returns the number of such pivot fixes.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, kk, jj, lo, hi, mid
    cdef int64_t kcol, jcol
    cdef double lik, dk, scale
    cdef int fixes = 0
    scale = 0.0
    for kk in range(data.shape[0]):
        if data[kk] > scale:
            scale = data[kk]
        elif -data[kk] > scale:
            scale = -data[kk]
    if scale == 0.0:
        scale = 1.0
    for i in range(n):
        for kk in range(indptr[i], indptr[i + 1]):
            kcol = indices[kk]
            if kcol >= i:
                break
            dk = data[diag_pos[kcol]]
            lik = data[kk] / dk
            data[kk] = lik
            for jj in range(diag_pos[kcol] + 1, indptr[kcol + 1]):
                jcol = indices[jj]
                # binary search for column jcol in row i beyond position kk
                lo = kk + 1
                hi = indptr[i + 1] - 1
                while lo <= hi:
                    mid = (lo + hi) >> 1
                    if indices[mid] < jcol:
                        lo = mid + 1
                    elif indices[mid] > jcol:
                        hi = mid - 1
                    else:
                        data[mid] -= lik * data[jj]
                        break
        dk = data[diag_pos[i]]
        if -1e-14 * scale < dk < 1e-14 * scale:
            data[diag_pos[i]] = 1e-14 * scale if dk >= 0.0 else -1e-14 * scale
            fixes += 1
    return fixes


def ilu0_solve(const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] data, const int64_t[::1] diag_pos,
               const double[::1] b, double[::1] out):
    """Solve L U x = b for an ILU(0) factorization stored as by ilu0_factor."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, kk
    cdef double acc
    for i in range(n):
        acc = b[i]
        for kk in range(indptr[i], indptr[i + 1]):
            if indices[kk] >= i:
                break
            acc -= data[kk] * out[indices[kk]]
        out[i] = acc
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for kk in range(diag_pos[i] + 1, indptr[i + 1]):
            acc -= data[kk] * out[indices[kk]]
        out[i] = acc / data[diag_pos[i]]
    return out


def p1_element_matrices(const double[:, :, ::1] tri_xyz,
                        double[:, :, ::1] mass_out,
                        double[:, :, ::1] stiff_out,
                        double[::1] area_out):
    """Per-triangle P1 mass/stiffness matrices on affine surface triangles.

    tri_xyz has shape (m, 3, 3): triangle, local vertex, coordinate.
    Local mass is (A/12)[[2,1,1],[1,2,1],[1,1,2]]; local stiffness is
    e_i . e_j / (4A) with e_i the edge opposite local vertex i.
    """
    cdef Py_ssize_t m = tri_xyz.shape[0]
    cdef Py_ssize_t t, i, j, c
    cdef double e[3][3]
    cdef double nx, ny, nz, area, dot
    for t in range(m):
        # e_i = p_{i+2} - p_{i+1} (indices mod 3)
        for i in range(3):
            for c in range(3):
                e[i][c] = tri_xyz[t, (i + 2) % 3, c] - tri_xyz[t, (i + 1) % 3, c]
        nx = e[0][1] * e[1][2] - e[0][2] * e[1][1]
        ny = e[0][2] * e[1][0] - e[0][0] * e[1][2]
        nz = e[0][0] * e[1][1] - e[0][1] * e[1][0]
        area = 0.5 * sqrt(nx * nx + ny * ny + nz * nz)
        area_out[t] = area
        for i in range(3):
            for j in range(3):
                mass_out[t, i, j] = area / 12.0 * (2.0 if i == j else 1.0)
                dot = e[i][0] * e[j][0] + e[i][1] * e[j][1] + e[i][2] * e[j][2]
                stiff_out[t, i, j] = dot / (4.0 * area)
    return None
