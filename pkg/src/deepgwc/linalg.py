"""Dense and sparse real linear algebra.

Dense matrices are plain 2-D ``float64`` numpy arrays.  Sparse matrices use
:class:`SparseMatrix`, a validated CSR container; products are delegated to
``scipy.sparse``.  The symmetric eigensolver is a Householder
tridiagonalisation followed by implicit-shift QL iteration, compiled with
numba.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
import scipy.sparse as sp

__all__ = [
    "ShapeError",
    "NotSymmetricError",
    "ConvergenceError",
    "SparseMatrix",
    "spmm",
    "sparse_product",
    "eigh_sym",
    "threshold_sparsify",
    "density",
    "frobenius_rel_error",
]

SYMMETRY_TOL = 1e-10


class ShapeError(ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, op: str, *shapes):
        self.shapes = shapes
        text = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {text}")


class NotSymmetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """QL iteration ran out of budget; ``residual`` is the largest off-diagonal left."""

    def __init__(self, residual: float, index: int):
        self.residual = residual
        self.index = index
        super().__init__(
            f"eigensolver did not converge at eigenvalue {index}; "
            f"off-diagonal residual {residual:.3e}"
        )


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed row-major sparse real matrix.

    Column indices are strictly increasing inside every row and the row
    offsets end at ``nnz``.  Instances are immutable; use the constructors
    rather than filling the arrays by hand.
    """

    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)
        self._validate()

    def _validate(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative dimension")
        if self.indptr.shape != (self.rows + 1,):
            raise ValueError("row offsets must have length rows + 1")
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must start at 0 and be non-decreasing")
        nnz = int(self.indptr[-1])
        if self.indices.shape != (nnz,) or self.data.shape != (nnz,):
            raise ValueError("last row offset must equal the number of stored values")
        if nnz:
            if self.indices.min() < 0 or self.indices.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing within a row: every step inside a row is positive
            step = np.diff(self.indices)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[self.indptr[1:-1][self.indptr[1:-1] < nnz]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within each row")
            if not np.all(np.isfinite(self.data)):
                raise ValueError("non-finite stored value")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        csr = sp.csr_matrix(m, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, m: np.ndarray) -> "SparseMatrix":
        """Store every nonzero entry of ``m``."""
        m = _as_dense(m)
        return cls.from_scipy(sp.csr_matrix(m))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SparseMatrix":
        return cls(rows, cols, np.zeros(rows + 1), np.zeros(0), np.zeros(0))

    @cached_property
    def scipy(self) -> sp.csr_matrix:
        # scipy shares our (read-only) buffers; never mutate the result in place
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.scipy.toarray()

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.scipy.T.tocsr())

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return sparse_product(self, other)
        return spmm(self, other)

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def _as_dense(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("dense matrix", m.shape)
    return m


def spmm(a: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Sparse times dense product ``a @ b``."""
    b = _as_dense(b)
    if a.cols != b.shape[0]:
        raise ShapeError("spmm", a.shape, b.shape)
    if a.nnz == 0:
        return np.zeros((a.rows, b.shape[1]))
    return np.asarray(a.scipy @ b)


def sparse_product(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.cols != b.rows:
        raise ShapeError("sparse product", a.shape, b.shape)
    prod = (a.scipy @ b.scipy).tocsr()
    prod.eliminate_zeros()
    return SparseMatrix.from_scipy(prod)


def threshold_sparsify(m: np.ndarray, t: float) -> SparseMatrix:
    """Keep the entries with ``|m_ij| >= t``; everything else becomes a structural zero.

    Exact zeros are never stored, so ``t = 0`` keeps precisely the nonzeros.
    """
    if not np.isfinite(t):
        raise ValueError("threshold must be finite")
    if t < 0:
        raise ValueError(f"threshold must be non-negative, got {t}")
    m = _as_dense(m)
    keep = (np.abs(m) >= t) & (m != 0)
    rows, cols = np.nonzero(keep)
    counts = np.bincount(rows, minlength=m.shape[0])
    indptr = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(m.shape[0], m.shape[1], indptr, cols, m[rows, cols])


def density(m: SparseMatrix) -> float:
    total = m.rows * m.cols
    return m.nnz / total if total else 0.0


def frobenius_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_F / ||b||_F`` with the denominator floored at machine epsilon."""
    a = _as_dense(a)
    b = _as_dense(b)
    if a.shape != b.shape:
        raise ShapeError("frobenius_rel_error", a.shape, b.shape)
    denom = max(np.linalg.norm(b), np.finfo(np.float64).eps)
    return float(np.linalg.norm(a - b) / denom)


# --- symmetric eigensolver --------------------------------------------------
#
# Loops follow the column-oriented EISPACK ordering (tred2/tql2); V is kept in
# Fortran order so the innermost loops walk contiguous memory.


@numba.njit(cache=True)
def _tred2(V, d, e):
    n = V.shape[0]
    for j in range(n):
        d[j] = V[n - 1, j]
    for i in range(n - 1, 0, -1):
        scale = 0.0
        h = 0.0
        for k in range(i):
            scale += abs(d[k])
        if scale == 0.0:
            e[i] = d[i - 1]
            for j in range(i):
                d[j] = V[i - 1, j]
                V[i, j] = 0.0
                V[j, i] = 0.0
        else:
            for k in range(i):
                d[k] /= scale
                h += d[k] * d[k]
            f = d[i - 1]
            g = np.sqrt(h)
            if f > 0:
                g = -g
            e[i] = scale * g
            h = h - f * g
            d[i - 1] = f - g
            for j in range(i):
                e[j] = 0.0
            for j in range(i):
                f = d[j]
                V[j, i] = f
                g = e[j] + V[j, j] * f
                for k in range(j + 1, i):
                    g += V[k, j] * d[k]
                    e[k] += V[k, j] * f
                e[j] = g
            f = 0.0
            for j in range(i):
                e[j] /= h
                f += e[j] * d[j]
            hh = f / (h + h)
            for j in range(i):
                e[j] -= hh * d[j]
            for j in range(i):
                f = d[j]
                g = e[j]
                for k in range(j, i):
                    V[k, j] -= f * e[k] + g * d[k]
                d[j] = V[i - 1, j]
                V[i, j] = 0.0
        d[i] = h

    # accumulate the Householder reflections into V
    for i in range(n - 1):
        V[n - 1, i] = V[i, i]
        V[i, i] = 1.0
        h = d[i + 1]
        if h != 0.0:
            for k in range(i + 1):
                d[k] = V[k, i + 1] / h
            for j in range(i + 1):
                g = 0.0
                for k in range(i + 1):
                    g += V[k, i + 1] * V[k, j]
                for k in range(i + 1):
                    V[k, j] -= g * d[k]
        for k in range(i + 1):
            V[k, i + 1] = 0.0
    for j in range(n):
        d[j] = V[n - 1, j]
        V[n - 1, j] = 0.0
    V[n - 1, n - 1] = 1.0
    e[0] = 0.0


@numba.njit(cache=True)
def _tql2(V, d, e, max_iter):
    """Implicit-shift QL on the tridiagonal (d, e); rotations accumulate into V.

    Returns -1 on success, otherwise the index of the eigenvalue that stalled.
    """
    n = V.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    f = 0.0
    tst1 = 0.0
    eps = 2.0 ** -52
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n - 1:
            if abs(e[m]) <= eps * tst1:
                break
            m += 1
        if m > l:
            it = 0
            while True:
                it += 1
                if it > max_iter:
                    return l
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = np.hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] -= h
                f += h
                p = d[m]
                c = 1.0
                c2 = c
                c3 = c
                el1 = e[l + 1]
                s = 0.0
                s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = np.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    for k in range(n):
                        h = V[k, i + 1]
                        V[k, i + 1] = s * V[k, i] + c * h
                        V[k, i] = c * V[k, i] - s * h
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] = d[l] + f
        e[l] = 0.0
    return -1


def eigh_sym(m: np.ndarray, max_iter: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix.

    Returns ``(w, U)`` with ``w`` ascending and the columns of ``U``
    orthonormal, so that ``m == U @ diag(w) @ U.T``.  ``max_iter`` bounds the
    QL sweeps spent on any single eigenvalue.

    Raises :class:`NotSymmetricError` if ``max |m - m.T| > 1e-10`` and
    :class:`ConvergenceError` if the iteration budget runs out.
    """
    m = _as_dense(m)
    n, k = m.shape
    if n != k:
        raise ShapeError("eigh_sym", m.shape)
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > SYMMETRY_TOL:
        raise NotSymmetricError(f"matrix is not symmetric (max |m - m^T| = {asym:.3e})")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")

    V = np.asfortranarray(0.5 * (m + m.T))
    d = np.zeros(n)
    e = np.zeros(n)
    _tred2(V, d, e)
    stalled = _tql2(V, d, e, max_iter)
    if stalled >= 0:
        raise ConvergenceError(float(np.max(np.abs(e))), stalled)
    order = np.argsort(d, kind="stable")
    return d[order], np.ascontiguousarray(V[:, order])
