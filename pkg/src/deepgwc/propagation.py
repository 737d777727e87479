"""The static wavelet filter and the combined Fourier/wavelet propagation operator."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph import LaplacianBundle
from .linalg import ShapeError, SparseMatrix, density, sparse_product
from .wavelet import WaveletBasis

__all__ = ["FilterConfig", "PropagationOperator", "assemble", "scalar_absorption_check"]

# above this fill ratio the operator is applied as a dense BLAS product
DENSE_APPLY_RATIO = 0.2


@dataclass(frozen=True)
class FilterConfig:
    """Static filter ``F = f * I`` shared by every layer."""

    f: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.f) or self.f <= 0:
            raise ValueError(f"filter constant must be finite and positive, got {self.f}")


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    matrix: SparseMatrix
    gamma: float
    filter: FilterConfig
    provenance: str  # "fourier-only", "wavelet-only" or "combined"

    @property
    def n(self) -> int:
        return self.matrix.rows

    @property
    def density(self) -> float:
        return density(self.matrix)

    @cached_property
    def _kernel(self):
        if self.density > DENSE_APPLY_RATIO:
            return self.matrix.to_dense()
        return self.matrix.scipy

    @cached_property
    def _kernel_t(self):
        k = self._kernel
        return k.T if isinstance(k, np.ndarray) else k.T.tocsr()

    def apply(self, h: np.ndarray) -> np.ndarray:
        if h.shape[0] != self.n:
            raise ShapeError("propagate", self.matrix.shape, h.shape)
        return np.asarray(self._kernel @ h)

    def apply_transpose(self, h: np.ndarray) -> np.ndarray:
        if h.shape[0] != self.n:
            raise ShapeError("propagate^T", self.matrix.shape, h.shape)
        return np.asarray(self._kernel_t @ h)

    @classmethod
    def identity(cls, n: int) -> "PropagationOperator":
        return cls(SparseMatrix.identity(n), 0.0, FilterConfig(), "identity")


def assemble(
    bundle: LaplacianBundle,
    basis: WaveletBasis | None,
    gamma: float,
    filter: FilterConfig = FilterConfig(),
) -> PropagationOperator:
    """``gamma * (psi F psi^-1) + (1 - gamma) * P~``, symmetrised.

    ``F = f I`` commutes with everything, so the wavelet term is formed as
    ``(gamma f) * (psi @ psi^-1)``.  Thresholding can make that product
    slightly asymmetric; the result is replaced by ``(M + M^T) / 2``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma > 0 and basis is None:
        raise ValueError("gamma > 0 needs a wavelet basis")
    if gamma == 0:
        return PropagationOperator(bundle.propagation, 0.0, filter, "fourier-only")
    if basis.n != bundle.n:
        raise ShapeError("assemble", (basis.n, basis.n), bundle.propagation.shape)

    wav = sparse_product(basis.psi, basis.psi_inv).scipy
    wav = 0.5 * (wav + wav.T)
    total = (gamma * filter.f) * wav
    provenance = "wavelet-only"
    if gamma < 1:
        total = total + (1.0 - gamma) * bundle.propagation.scipy
        provenance = "combined"
    total = sp.csr_matrix(total)
    total.eliminate_zeros()
    return PropagationOperator(SparseMatrix.from_scipy(total), float(gamma), filter, provenance)


def scalar_absorption_check(basis: WaveletBasis, gamma: float, f: float) -> float:
    """Largest entrywise gap between ``gamma (psi F psi^-1)`` and ``gamma f (psi psi^-1)``."""
    if gamma == 0:
        return 0.0
    F = sp.identity(basis.n, format="csr") * f
    lhs = gamma * (basis.psi.scipy @ F @ basis.psi_inv.scipy)
    rhs = (gamma * f) * (basis.psi.scipy @ basis.psi_inv.scipy)
    diff = (lhs - rhs).tocsr()
    return float(np.abs(diff.data).max()) if diff.nnz else 0.0
