"""Compressed-row matrices and a sparse direct solver.

The linearized systems are nonsymmetric (two asymmetric edge terms), so the
default solver is an LU factorization with partial pivoting (SuperLU via
scipy).  ``solve`` verifies the residual of every returned solution and
raises instead of returning garbage near singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10
_PIVOT_RATIO = 1e-14  # smallest acceptable |U_ii| relative to the largest


class LinearSolveError(RuntimeError):
    """Factorization failure or unmet residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class SparseMatrix:
    """CSR matrix: monotone row offsets, strictly increasing column indices."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=float)
        nrows, ncols = self.shape
        if len(self.indptr) != nrows + 1 or self.indptr[0] != 0 or self.indptr[-1] != len(self.data):
            raise ValueError("malformed row offsets")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be nondecreasing")
        if len(self.data):
            rows = np.repeat(np.arange(nrows), np.diff(self.indptr))
            key = rows * np.int64(ncols) + self.indices
            if np.any(np.diff(key) <= 0):
                raise ValueError("column indices must be strictly increasing within each row")
            if self.indices.min() < 0 or self.indices.max() >= ncols:
                raise ValueError("column index out of range")
        if np.isnan(self.data).any():
            raise ValueError("stored values contain NaN")

    @classmethod
    def from_coo(cls, rows, cols, values, shape) -> "SparseMatrix":
        a = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
        a.sum_duplicates()
        a.sort_indices()
        return cls(a.indptr, a.indices, a.data, shape)

    @classmethod
    def from_scipy(cls, a) -> "SparseMatrix":
        a = a.tocsr()
        a.sum_duplicates()
        a.sort_indices()
        return cls(a.indptr, a.indices, a.data, a.shape)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    @property
    def nnz(self) -> int:
        return len(self.data)


def spmv(matrix: SparseMatrix, x) -> np.ndarray:
    """Sparse matrix-vector product."""
    x = np.asarray(x, dtype=float)
    if x.shape != (matrix.shape[1],):
        raise ValueError(f"dimension mismatch: matrix {matrix.shape}, vector {x.shape}")
    return matrix.to_scipy() @ x


def solve(matrix: SparseMatrix, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Direct solve with a verified relative residual ||Mx-b|| <= tol ||b||."""
    nrows, ncols = matrix.shape
    if nrows != ncols:
        raise ValueError(f"matrix must be square, got {matrix.shape}")
    b = np.asarray(b, dtype=float)
    if b.shape != (nrows,):
        raise ValueError(f"dimension mismatch: matrix {matrix.shape}, rhs {b.shape}")

    a = matrix.to_scipy().tocsc()
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorization failed: {exc}") from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.size and udiag.min() < _PIVOT_RATIO * udiag.max():
        raise LinearSolveError(
            f"near-singular factorization: pivot ratio {udiag.min() / udiag.max():.2e}"
        )
    x = lu.solve(b)
    residual = float(np.linalg.norm(a @ x - b))
    norm_b = float(np.linalg.norm(b))
    if residual > tol * norm_b and not (norm_b == 0.0 and residual == 0.0):
        raise LinearSolveError(
            f"linear solve residual {residual:.3e} exceeds {tol:.1e} * ||b|| = {tol * norm_b:.3e}",
            residual=residual,
        )
    return x


def dump_matrix_market(matrix: SparseMatrix, path) -> None:
    """Debug dump in MatrixMarket format."""
    scipy.io.mmwrite(str(path), matrix.to_scipy())
