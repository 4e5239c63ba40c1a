"""Sparse CSR storage, block-system flattening and the linear solvers.

The BiCGStab implementation is Jacobi-preconditioned (right preconditioning)
and verifies the true residual of the iterate it returns.  Small systems go
through a dense partial-pivot LU so that singularity can name the pivot.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NoConvergenceError, SingularMatrixError

DIRECT_SOLVE_DEFAULT_MAX_N = 3000


@dataclass(frozen=True)
class SparseMatrix:
    """Square CSR matrix with int64 index arrays.

    Column indices are strictly increasing within each row and no duplicate
    entries are stored.  `symmetric` is a structural hint only.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = False

    @property
    def nnz(self):
        return len(self.indices)

    @classmethod
    def from_coo(cls, n, rows, cols, vals, symmetric=False):
        """Build from triplets, summing duplicates; deterministic ordering."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new_group = np.empty(len(rows), dtype=bool)
            new_group[0] = True
            new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group_ids = np.cumsum(new_group) - 1
            summed = np.bincount(group_ids, weights=vals)
            rows, cols = rows[new_group], cols[new_group]
        else:
            summed = vals
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, cols.astype(np.int64), np.asarray(summed, dtype=np.float64),
                   symmetric=symmetric)

    @classmethod
    def from_dense(cls, a, symmetric=False):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols], symmetric=symmetric)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n), symmetric=True)

    def matvec(self, x):
        return matvec(self, x)

    def _row_ids(self):
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def diagonal(self):
        mask = self.indices == self._row_ids()
        d = np.zeros(self.n)
        d[self.indices[mask]] = self.data[mask]
        return d

    def diagonal_positions(self):
        """Index into `data` of each diagonal entry; -1 where absent."""
        mask = self.indices == self._row_ids()
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[self.indices[mask]] = np.nonzero(mask)[0]
        return pos

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        a[self._row_ids(), self.indices] = self.data
        return a

    def scaled(self, alpha):
        return SparseMatrix(self.n, self.indptr, self.indices, alpha * self.data,
                            symmetric=self.symmetric)

    def validate(self):
        assert len(self.indptr) == self.n + 1
        assert self.indptr[0] == 0 and self.indptr[-1] == self.nnz
        assert np.all(np.diff(self.indptr) >= 0)
        for i in range(self.n):
            cols = self.indices[self.indptr[i]:self.indptr[i + 1]]
            assert np.all(np.diff(cols) > 0), f"row {i} columns not strictly increasing"
        return True


def matvec(a, x):
    """Exact CSR product A @ x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n,):
        raise ValueError(f"dimension mismatch: matrix is {a.n}, vector is {x.shape}")
    out = np.empty(a.n)
    kernels.csr_matvec(a.indptr, a.indices, a.data, np.ascontiguousarray(x), out)
    return out


@dataclass
class BlockSystem:
    """Square grid of optional equal-sized CSR blocks plus a right-hand side.

    Flattening concatenates block rows in order; unknown ordering is
    (phi, mu, v) for the 3x3 systems used by the time steppers.
    """

    n: int
    blocks: list
    rhs: np.ndarray = field(default=None)

    def __post_init__(self):
        k = len(self.blocks)
        for row in self.blocks:
            assert len(row) == k, "block grid must be square"
            for b in row:
                assert b is None or b.n == self.n, "blocks must share dimension"
        if self.rhs is None:
            self.rhs = np.zeros(k * self.n)

    @property
    def k(self):
        return len(self.blocks)

    def flatten(self):
        flat, _ = flatten_blocks(self.blocks, self.n)
        return flat, self.rhs


def flatten_blocks(blocks, n):
    """Merge a k x k grid of CSR blocks into one CSR matrix.

    Blocks occupy disjoint column ranges, so each flat row is the ordered
    concatenation of its block rows: no sorting or deduplication needed.
    Also returns, per present block, the destination slots of its data
    inside the flat data array (reused by the steppers to update values
    in place without re-flattening).
    """
    k = len(blocks)
    nf = k * n
    counts = np.zeros(nf, dtype=np.int64)
    for i in range(k):
        for j in range(k):
            b = blocks[i][j]
            if b is not None:
                counts[i * n:(i + 1) * n] += np.diff(b.indptr)
    indptr = np.zeros(nf + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.zeros(indptr[-1])
    positions = {}
    row_fill = indptr[:-1].copy()
    for i in range(k):
        for j in range(k):
            b = blocks[i][j]
            if b is None:
                continue
            bcounts = np.diff(b.indptr)
            starts = row_fill[i * n:(i + 1) * n]
            # destination slot of every entry of block (i, j)
            dest = np.repeat(starts, bcounts) + _ramp(bcounts)
            indices[dest] = b.indices + j * n
            data[dest] = b.data
            positions[(i, j)] = dest
            row_fill[i * n:(i + 1) * n] += bcounts
    flat = SparseMatrix(nf, indptr, indices, data)
    return flat, positions


def _ramp(counts):
    """[0..c0-1, 0..c1-1, ...] for a vector of counts."""
    total = int(counts.sum())
    out = np.arange(total, dtype=np.int64)
    out -= np.repeat(np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return out


def interleave_blocks(grid_fields, pattern, n):
    """Merge k x k blocks sharing one CSR `pattern` into a vertex-interleaved
    CSR matrix: unknown (i, f) lives at row k*i + f.

    `grid_fields[f]` lists the fields g for which block (f, g) is present.
    Returns (flat, positions) where positions[(f, g)] maps the pattern slots
    of block (f, g) into flat.data.  Interleaving keeps each vertex's fields
    adjacent, which is what makes ILU(0) effective on these systems.
    """
    k = len(grid_fields)
    counts = np.diff(pattern.indptr)
    nf = k * n
    indptr = np.zeros(nf + 1, dtype=np.int64)
    for f in range(k):
        indptr[1 + np.arange(n, dtype=np.int64) * k + f] = counts * len(grid_fields[f])
    np.cumsum(indptr, out=indptr)
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.zeros(indptr[-1])
    positions = {}
    row_ids = np.repeat(np.arange(n, dtype=np.int64), counts)
    ramp = _ramp(counts)
    for f in range(k):
        present = grid_fields[f]
        width = len(present)
        row_starts = indptr[row_ids * k + f]
        for slot, g in enumerate(present):
            dest = row_starts + ramp * width + slot
            indices[dest] = pattern.indices * k + g
            positions[(f, g)] = dest
    flat = SparseMatrix(nf, indptr, indices, data)
    return flat, positions


class SparseLUPreconditioner:
    """Right preconditioner backed by a full sparse LU of a snapshot of the
    matrix (SuperLU).

    For the slowly varying step systems the factorization is reused across
    many steps and refreshed only when the outer Krylov iteration degrades,
    so the per-step cost is a pair of triangular solves.
    """

    def __init__(self, a):
        self.refresh(a)

    def refresh(self, a):
        import scipy.sparse
        import scipy.sparse.linalg

        mat = scipy.sparse.csc_matrix(
            scipy.sparse.csr_matrix((a.data, a.indices, a.indptr),
                                    shape=(a.n, a.n)))
        self._lu = scipy.sparse.linalg.splu(mat)

    def __call__(self, r):
        return self._lu.solve(r)


class ILU0Preconditioner:
    """Incomplete-LU (zero fill) right preconditioner for a CSR matrix.

    The factorization can be refreshed in place when the matrix values
    change; the sparsity pattern must stay fixed.
    """

    def __init__(self, a, diag_pos=None):
        self.indptr = a.indptr
        self.indices = a.indices
        self.diag_pos = a.diagonal_positions() if diag_pos is None else diag_pos
        if np.any(self.diag_pos < 0):
            raise ValueError("ILU(0) requires a full diagonal in the pattern")
        self.factors = np.empty_like(a.data)
        self.pivot_fixes = 0
        self.refresh(a)

    def refresh(self, a):
        np.copyto(self.factors, a.data)
        self.pivot_fixes = kernels.ilu0_factor(self.indptr, self.indices,
                                               self.factors, self.diag_pos)

    def __call__(self, r):
        out = np.empty_like(r)
        kernels.ilu0_solve(self.indptr, self.indices, self.factors,
                           self.diag_pos, r, out)
        return out


def zero_mean_project(x, weights):
    """Subtract the weighted mean: sum(w * x') = 0 afterwards."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0.0:
        raise ValueError("weights must have positive sum")
    return x - (w @ x) / total


def direct_solve(a, b, max_n=DIRECT_SOLVE_DEFAULT_MAX_N):
    """Dense LU with partial pivoting for small systems.

    Accepts a dense array or a SparseMatrix (densified).  Solves through
    LAPACK; if that reports singularity (or returns an unusable solution),
    the elimination is rerun in numpy to name the failing pivot in the
    SingularMatrixError.
    """
    if isinstance(a, SparseMatrix):
        if a.n > max_n:
            raise ValueError(f"system size {a.n} above direct-solver threshold {max_n}")
        a = a.to_dense()
    else:
        a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or len(b) != n:
        raise ValueError("dimension mismatch in direct_solve")
    b = np.asarray(b, dtype=np.float64)
    try:
        x = np.linalg.solve(a, b)
        if np.all(np.isfinite(x)):
            return x
    except np.linalg.LinAlgError:
        pass
    raise SingularMatrixError(_failing_pivot(a))


def _failing_pivot(a):
    """Index of the first (near-)zero pivot in partial-pivot elimination."""
    a = a.copy()
    n = a.shape[0]
    scale = max(float(np.abs(a).max()), 1e-300)
    for kcol in range(n):
        p = kcol + int(np.argmax(np.abs(a[kcol:, kcol])))
        if np.abs(a[p, kcol]) <= 1e-14 * scale:
            return kcol
        if p != kcol:
            a[[kcol, p]] = a[[p, kcol]]
        a[kcol + 1:, kcol] /= a[kcol, kcol]
        if kcol + 1 < n:
            a[kcol + 1:, kcol + 1:] -= np.outer(a[kcol + 1:, kcol], a[kcol, kcol + 1:])
    return n - 1


def bicgstab(a, b=None, x0=None, rtol=1e-9, maxit=None, precond="jacobi"):
    """Stabilized bi-conjugate gradients for CSR (or block) systems.

    Returns (x, iterations, residual) with ||b - A x||_2 <= rtol * ||b||_2
    for the true residual.  `precond` is None, "jacobi" (diagonal) or a
    callable r -> z applied as a right preconditioner.  On breakdown the
    Krylov process restarts once from the current iterate; if the tolerance
    is still unreachable a NoConvergenceError carrying the best iterate is
    raised.
    """
    if isinstance(a, BlockSystem):
        a, rhs = a.flatten()
        b = rhs if b is None else b
    if not 0.0 < rtol < 1.0:
        raise ValueError("rtol must lie in (0, 1)")
    b = np.asarray(b, dtype=np.float64)
    if len(b) != a.n:
        raise ValueError("dimension mismatch in bicgstab")
    n = a.n
    if maxit is None:
        maxit = 10 * n
    if precond == "jacobi":
        d = a.diagonal()
        inv_d = 1.0 / np.where(np.abs(d) > 0.0, d, 1.0)
        apply_precond = lambda r: r * inv_d
    elif precond is None:
        apply_precond = lambda r: r
    else:
        apply_precond = precond

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    target = rtol * bnorm

    best_x = x.copy()
    best_res = np.linalg.norm(b - a.matvec(x))
    if best_res <= target:
        return x, 0, best_res

    iterations = 0
    restarts_left = 1
    while iterations < maxit:
        # (re)start the Krylov process from the current iterate
        r = b - a.matvec(x)
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        broke_down = False
        while iterations < maxit:
            rho_new = r_hat @ r
            if abs(rho_new) < 1e-300 * bnorm:
                broke_down = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            ph = apply_precond(p)
            v = a.matvec(ph)
            denom = r_hat @ v
            if abs(denom) < 1e-300 * bnorm:
                broke_down = True
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                x = x + alpha * ph
                iterations += 1
                res = np.linalg.norm(b - a.matvec(x))
                if res < best_res:
                    best_res, best_x = res, x.copy()
                if res <= target:
                    return x, iterations, res
                broke_down = False
                break  # recursive estimate lied; restart from x
            sh = apply_precond(s)
            t = a.matvec(sh)
            tt = t @ t
            if tt == 0.0:
                broke_down = True
                break
            omega = (t @ s) / tt
            if omega == 0.0:
                broke_down = True
                break
            x = x + alpha * ph + omega * sh
            r = s - omega * t
            iterations += 1
            rnorm = np.linalg.norm(r)
            if rnorm < best_res:
                best_res, best_x = rnorm, x.copy()
            if rnorm <= target:
                res = np.linalg.norm(b - a.matvec(x))
                if res < best_res:
                    best_res, best_x = res, x.copy()
                if res <= target:
                    return x, iterations, res
                broke_down = False
                break  # true residual disagrees; restart from x
        if broke_down:
            if restarts_left == 0:
                break
            restarts_left -= 1
        # loop continues: fresh Krylov process from current x
    res = np.linalg.norm(b - a.matvec(x))
    if res <= target:
        return x, iterations, res
    if res < best_res:
        best_res, best_x = res, x
    raise NoConvergenceError(best_x, iterations, best_res)
