"""Shared test utilities.

The generalized eigenvalue helper is a small block inverse iteration built
on the package's own BiCGStab; it exists for spectrum checks of the
assembled (K, M) pencil.
"""

import numpy as np

from raftsim.sparse_linalg import SparseMatrix, bicgstab


def _shifted(k, m, shift):
    return SparseMatrix(k.n, k.indptr, k.indices, k.data + shift * m.data,
                        symmetric=True)


def generalized_eigenvalues(k, m, n_eigs, shift=1.0, iterations=30, rtol=1e-8,
                            buffer=5, seed=0):
    """Smallest eigenvalues of K x = lambda M x by block inverse iteration.

    K and M must share their sparsity pattern (as the FEM assembly
    guarantees).  Returns the n_eigs smallest eigenvalues, ascending.
    """
    n = k.n
    width = n_eigs + buffer
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, width))
    b = _shifted(k, m, shift)
    vals = None
    for _ in range(iterations):
        y = np.column_stack([m.matvec(x[:, j]) for j in range(width)])
        z = np.empty_like(x)
        for j in range(width):
            z[:, j], _, _ = bicgstab(b, y[:, j], x0=x[:, j], rtol=rtol,
                                     maxit=20 * n)
        # Rayleigh-Ritz on the pencil (K, M) in span(z)
        kz = np.column_stack([k.matvec(z[:, j]) for j in range(width)])
        mz = np.column_stack([m.matvec(z[:, j]) for j in range(width)])
        kr = z.T @ kz
        mr = z.T @ mz
        kr = 0.5 * (kr + kr.T)
        mr = 0.5 * (mr + mr.T)
        chol = np.linalg.cholesky(mr)
        inv_chol = np.linalg.inv(chol)
        sym = inv_chol @ kr @ inv_chol.T
        vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
        x = z @ (inv_chol.T @ vecs)
    return vals[:n_eigs]
