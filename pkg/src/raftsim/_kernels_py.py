"""Pure numpy fallback for the compiled kernels.

Kept semantically identical to _kernels_c: same accumulation order per row,
same element-matrix formulas.  Used when the extension is not built or when
RAFTSIM_PURE_PYTHON=1 forces it.
"""

import math

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    """out <- A @ x for a CSR matrix."""
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    out[:] = np.bincount(rows, weights=data * x[indices], minlength=n)
    return out


def block_gs_sweep(indptr, indices, data, block_inv, x, b, reverse):
    """Collective Gauss-Seidel sweep; see the compiled twin."""
    n_blocks, k, _ = block_inv.shape
    order = range(n_blocks - 1, -1, -1) if reverse else range(n_blocks)
    r = np.empty(k)
    for i in order:
        for f in range(k):
            row = i * k + f
            lo, hi = indptr[row], indptr[row + 1]
            r[f] = b[row] - data[lo:hi] @ x[indices[lo:hi]]
        x[i * k:(i + 1) * k] += block_inv[i] @ r
    return None


def ilu0_factor(indptr, indices, data, diag_pos):
    """In-place ILU(0) factorization; see the compiled twin for semantics."""
    n = len(indptr) - 1
    scale = float(np.abs(data).max()) if len(data) else 1.0
    if scale == 0.0:
        scale = 1.0
    fixes = 0
    for i in range(n):
        for kk in range(indptr[i], indptr[i + 1]):
            kcol = indices[kk]
            if kcol >= i:
                break
            lik = data[kk] / data[diag_pos[kcol]]
            data[kk] = lik
            row_lo, row_hi = kk + 1, indptr[i + 1]
            row_cols = indices[row_lo:row_hi]
            for jj in range(diag_pos[kcol] + 1, indptr[kcol + 1]):
                jcol = indices[jj]
                pos = np.searchsorted(row_cols, jcol)
                if pos < len(row_cols) and row_cols[pos] == jcol:
                    data[row_lo + pos] -= lik * data[jj]
        dk = data[diag_pos[i]]
        if abs(dk) < 1e-14 * scale:
            data[diag_pos[i]] = math.copysign(1e-14 * scale, dk if dk != 0.0 else 1.0)
            fixes += 1
    return fixes


def ilu0_solve(indptr, indices, data, diag_pos, b, out):
    """Forward/backward substitution for an ILU(0) factorization."""
    n = len(indptr) - 1
    for i in range(n):
        acc = b[i]
        for kk in range(indptr[i], indptr[i + 1]):
            col = indices[kk]
            if col >= i:
                break
            acc -= data[kk] * out[col]
        out[i] = acc
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for kk in range(diag_pos[i] + 1, indptr[i + 1]):
            acc -= data[kk] * out[indices[kk]]
        out[i] = acc / data[diag_pos[i]]
    return out


def p1_element_matrices(tri_xyz, mass_out, stiff_out, area_out):
    """Vectorized per-triangle P1 mass/stiffness matrices."""
    # e[:, i] = p_{i+2} - p_{i+1}
    e = np.empty_like(tri_xyz)
    for i in range(3):
        e[:, i] = tri_xyz[:, (i + 2) % 3] - tri_xyz[:, (i + 1) % 3]
    normal = np.cross(e[:, 0], e[:, 1])
    area = 0.5 * np.linalg.norm(normal, axis=1)
    area_out[:] = area
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    mass_out[:] = area[:, None, None] / 12.0 * base
    dots = np.einsum("tic,tjc->tij", e, e)
    stiff_out[:] = dots / (4.0 * area)[:, None, None]
    return None
