"""Numerical kernels: sparse storage and direct solves, dense eigensolvers.

Every other module goes through these helpers so that the choice of
factorization lives in a single place.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FormulationError, SolverError

__all__ = [
    "SparseMatrix",
    "sparse_solve",
    "sym_eig",
    "gen_sym_eig",
    "dense_solve",
    "restrict",
]


class SparseMatrix:
    """Square sparse matrix with an optional cached LU factorization.

    Parameters
    ----------
    matrix : sparse matrix or ndarray
        Square matrix, converted to CSC storage.
    symmetric : bool
        If True the symmetry is verified (relative asymmetry <= 1e-12).
    """

    def __init__(self, matrix, symmetric: bool = False):
        mat = sp.csc_matrix(matrix, dtype=float)
        if mat.shape[0] != mat.shape[1]:
            raise SolverError(f"matrix must be square, got {mat.shape}")
        if symmetric:
            scale = abs(mat).max() if mat.nnz else 0.0
            asym = abs(mat - mat.T).max() if mat.nnz else 0.0
            if asym > 1e-12 * max(scale, 1e-300):
                raise FormulationError(
                    f"matrix flagged symmetric but asymmetry is {asym:.3e} (scale {scale:.3e})"
                )
        self.matrix = mat
        self.symmetric = symmetric
        self._lu = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:  # "Factor is exactly singular"
                raise SolverError(f"sparse factorization failed: {exc}") from exc
        return self._lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sparse_solve(self, rhs)

    def __matmul__(self, other):
        return self.matrix @ other


def sparse_solve(handle: SparseMatrix, rhs: np.ndarray, check: bool = False) -> np.ndarray:
    """Solve ``handle.matrix @ x = rhs`` with the cached factorization.

    ``rhs`` may be a vector or a 2D array of right-hand sides. With
    ``check=True`` the relative residual is verified to be <= 1e-10.
    """
    lu = handle.factorize()
    rhs = np.asarray(rhs, dtype=float)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution (numerically singular matrix)")
    if check:
        res = np.linalg.norm(handle.matrix @ x - rhs)
        ref = np.linalg.norm(rhs)
        if res > 1e-10 * max(ref, 1e-300):
            raise SolverError(f"relative residual {res / ref:.3e} exceeds 1e-10")
    return x


def dense_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LU solve; batched over leading axes like :func:`numpy.linalg.solve`."""
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular reduced system: {exc}") from exc


def sym_eig(a: np.ndarray):
    """Eigen-decomposition of a dense symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray
        Ascending.
    eigenvectors : ndarray
        Orthonormal columns.
    """
    a = np.asarray(a, dtype=float)
    scale = np.abs(a).max() if a.size else 0.0
    if a.size and np.abs(a - a.T).max() > 1e-10 * max(scale, 1e-300):
        raise FormulationError("sym_eig called on a non-symmetric matrix")
    a = 0.5 * (a + a.T)
    try:
        return sla.eigh(a)
    except sla.LinAlgError as exc:
        raise SolverError(f"symmetric eigensolver did not converge: {exc}") from exc


def gen_sym_eig(a: np.ndarray, m: np.ndarray, k: int | None = None):
    """Generalized symmetric eigenproblem ``a v = lam m v`` with ``m`` SPD.

    Reduced to a standard problem through the Cholesky factor of ``m``.
    Returns ascending eigenvalues and ``m``-orthonormal eigenvectors;
    only the ``k`` smallest pairs when ``k`` is given.
    """
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    a = 0.5 * (a + a.T)
    m = 0.5 * (m + m.T)
    try:
        chol = sla.cholesky(m, lower=True)
    except sla.LinAlgError as exc:
        raise FormulationError("right-hand matrix is not positive definite") from exc
    tmp = sla.solve_triangular(chol, a, lower=True)
    std = sla.solve_triangular(chol, tmp.T, lower=True)
    lam, w = sym_eig(0.5 * (std + std.T))
    vecs = sla.solve_triangular(chol.T, w, lower=False)
    if k is not None:
        lam, vecs = lam[:k], vecs[:, :k]
    return lam, vecs


def restrict(matrix, rows: np.ndarray, cols: np.ndarray | None = None):
    """Sub-matrix on the given row/column index sets (sparse or dense)."""
    cols = rows if cols is None else cols
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix)[rows][:, cols]
    return np.asarray(matrix)[np.ix_(rows, cols)]
