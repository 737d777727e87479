"""Heat-kernel graph wavelet bases.

``psi_s = U diag(exp(-s * lam)) U^T`` and its inverse ``psi_{-s}`` are
computed either exactly from the Laplacian eigendecomposition or by a
Chebyshev polynomial expansion of the kernel on the spectral interval
``[0, 2]``.  Both are thresholded afterwards: entries with ``|v| < t`` are
dropped.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import LaplacianBundle
from .linalg import SparseMatrix, density, sparse_product, threshold_sparsify

__all__ = [
    "WaveletBasis",
    "heat_kernel",
    "chebyshev_coefficients",
    "chebyshev_apply",
    "wavelet_dense_exact",
    "wavelet_dense_chebyshev",
    "wavelet_exact",
    "wavelet_chebyshev",
    "basis_stats",
    "save_basis",
    "load_basis",
    "cached_basis",
]

LAMBDA_MAX = 2.0
DENSE_LIMIT = 4000
BLOCK_COLUMNS = 512


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    psi: SparseMatrix
    psi_inv: SparseMatrix
    scale: float
    threshold: float
    method: str  # "exact" or "chebyshev"
    order: int | None = None

    @property
    def n(self) -> int:
        return self.psi.rows

    @property
    def density_psi(self) -> float:
        return density(self.psi)

    @property
    def density_psi_inv(self) -> float:
        return density(self.psi_inv)

    @property
    def method_label(self) -> str:
        return self.method if self.order is None else f"{self.method}:{self.order}"


def heat_kernel(s: float):
    return lambda lam: np.exp(-s * lam)


def _check_scale(s):
    if not np.isfinite(s) or s <= 0:
        raise ValueError(f"wavelet scale must be positive, got {s}")


def _check_threshold(t):
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"threshold must be a finite non-negative number, got {t}")


def wavelet_dense_exact(bundle: LaplacianBundle, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Unthresholded ``(psi_s, psi_{-s})`` from the eigendecomposition."""
    _check_scale(s)
    lam, U = bundle.spectrum
    psi = (U * np.exp(-s * lam)) @ U.T
    psi_inv = (U * np.exp(s * lam)) @ U.T
    return _symmetrize(psi), _symmetrize(psi_inv)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    # the exact object is symmetric; removing rounding asymmetry keeps the
    # thresholded pattern symmetric too
    return 0.5 * (m + m.T)


def wavelet_exact(bundle: LaplacianBundle, s: float, t: float) -> WaveletBasis:
    _check_scale(s)
    _check_threshold(t)
    psi, psi_inv = wavelet_dense_exact(bundle, s)
    return WaveletBasis(threshold_sparsify(psi, t), threshold_sparsify(psi_inv, t), s, t, "exact")


def chebyshev_coefficients(func, order: int, lam_max: float = LAMBDA_MAX) -> np.ndarray:
    """Coefficients ``c_0..c_order`` of ``func`` on ``[0, lam_max]``.

    Uses Gauss-Chebyshev quadrature on ``order + 1`` nodes, so that
    ``func(lam) ~ c_0 / 2 + sum_k c_k T_k(2 lam / lam_max - 1)``.
    """
    if order < 1:
        raise ValueError(f"Chebyshev order must be at least 1, got {order}")
    npts = order + 1
    theta = np.pi * (np.arange(npts) + 0.5) / npts
    half = lam_max / 2.0
    fx = func(half * (np.cos(theta) + 1.0))
    k = np.arange(order + 1)[:, None]
    return 2.0 / npts * (np.cos(k * theta[None, :]) @ fx)


def chebyshev_apply(lap: SparseMatrix, coeffs, x: np.ndarray, lam_max: float = LAMBDA_MAX):
    """Evaluate ``sum_k c_k T_k(L_scaled) x`` for one or more coefficient vectors.

    ``coeffs`` has shape ``(order + 1,)`` or ``(r, order + 1)``; with a 2-D
    input a list of ``r`` results is returned, sharing the recurrence.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    half = lam_max / 2.0
    n = lap.rows
    lsc = (lap.scipy - half * sp.identity(n, format="csr")) / half
    lsc = lsc.tocsr()

    t_prev = np.array(x, dtype=np.float64)
    out = [0.5 * c[0] * t_prev for c in coeffs]
    if coeffs.shape[1] > 1:
        t_cur = lsc @ t_prev
        for o, c in zip(out, coeffs):
            o += c[1] * t_cur
        for k in range(2, coeffs.shape[1]):
            t_next = 2.0 * (lsc @ t_cur) - t_prev
            for o, c in zip(out, coeffs):
                o += c[k] * t_next
            t_prev, t_cur = t_cur, t_next
    return out


def wavelet_dense_chebyshev(bundle: LaplacianBundle, s: float, order: int):
    """Unthresholded Chebyshev approximations of ``(psi_s, psi_{-s})``."""
    _check_scale(s)
    coeffs = np.stack(
        [chebyshev_coefficients(heat_kernel(s), order), chebyshev_coefficients(heat_kernel(-s), order)]
    )
    psi, psi_inv = chebyshev_apply(bundle.laplacian, coeffs, np.eye(bundle.n))
    return _symmetrize(psi), _symmetrize(psi_inv)


def wavelet_chebyshev(
    bundle: LaplacianBundle, s: float, t: float, order: int, block: int | None = None
) -> WaveletBasis:
    """Chebyshev wavelet basis, thresholded after the full expansion.

    Graphs above ``DENSE_LIMIT`` nodes are processed in column blocks so that
    only one ``n x block`` slab is dense at a time.
    """
    _check_scale(s)
    _check_threshold(t)
    if order < 1:
        raise ValueError(f"Chebyshev order must be at least 1, got {order}")
    n = bundle.n
    if block is None and n <= DENSE_LIMIT:
        psi, psi_inv = wavelet_dense_chebyshev(bundle, s, order)
        return WaveletBasis(
            threshold_sparsify(psi, t), threshold_sparsify(psi_inv, t), s, t, "chebyshev", order
        )

    block = block or BLOCK_COLUMNS
    coeffs = np.stack(
        [chebyshev_coefficients(heat_kernel(s), order), chebyshev_coefficients(heat_kernel(-s), order)]
    )
    rows_psi, rows_inv = [], []
    for start in range(0, n, block):
        stop = min(n, start + block)
        e = np.zeros((n, stop - start))
        e[np.arange(start, stop), np.arange(stop - start)] = 1.0
        y_psi, y_inv = chebyshev_apply(bundle.laplacian, coeffs, e)
        # polynomials in a symmetric L are symmetric: columns are rows
        rows_psi.append(threshold_sparsify(y_psi.T, t).scipy)
        rows_inv.append(threshold_sparsify(y_inv.T, t).scipy)
    psi = SparseMatrix.from_scipy(sp.vstack(rows_psi, format="csr"))
    psi_inv = SparseMatrix.from_scipy(sp.vstack(rows_inv, format="csr"))
    return WaveletBasis(psi, psi_inv, s, t, "chebyshev", order)


def basis_stats(basis: WaveletBasis, columns: int | None = None, seed: int = 0) -> dict:
    """Densities and how far the thresholded pair is from being mutually inverse.

    With ``columns`` set, residuals are measured on that many random columns
    of ``psi @ psi_inv`` instead of the full product (large graphs).
    """
    n = basis.n
    if columns is None or columns >= n:
        cols = np.arange(n)
        prod = sparse_product(basis.psi, basis.psi_inv).scipy.tocoo()
        rows, cidx, vals = prod.row, prod.col, prod.data
    else:
        cols = np.sort(np.random.default_rng(seed).choice(n, size=columns, replace=False))
        block = (basis.psi.scipy @ basis.psi_inv.scipy[:, cols]).tocoo()
        rows, cidx, vals = block.row, cols[block.col], block.data
    diag = dict.fromkeys(cols.tolist(), 0.0)
    on_diag = rows == cidx
    for r, v in zip(rows[on_diag].tolist(), vals[on_diag].tolist()):
        diag[r] = v
    off = vals[~on_diag]
    return {
        "density_psi": basis.density_psi,
        "density_psi_inverse": basis.density_psi_inv,
        "max_offdiag_residual": float(np.abs(off).max()) if off.size else 0.0,
        "max_diag_residual": float(max(abs(v - 1.0) for v in diag.values())) if n else 0.0,
        "columns_checked": int(len(cols)),
    }


# --- on-disk cache ----------------------------------------------------------
#
# layout (little endian):
#   8s   magic b"DGWCWAV1"
#   u64  length of the UTF-8 JSON key, then the key bytes
#   two CSR blocks (psi, then psi_inv), each:
#     u64 rows, u64 cols, u64 nnz
#     i64[rows + 1] row offsets, i64[nnz] column indices, f64[nnz] values

MAGIC = b"DGWCWAV1"


def _write_csr(fh, m: SparseMatrix):
    fh.write(struct.pack("<QQQ", m.rows, m.cols, m.nnz))
    fh.write(m.indptr.astype("<i8").tobytes())
    fh.write(m.indices.astype("<i8").tobytes())
    fh.write(m.data.astype("<f8").tobytes())


def _read_exact(fh, size: int) -> bytes:
    buf = fh.read(size)
    if len(buf) != size:
        raise ValueError("truncated wavelet cache file")
    return buf


def _read_csr(fh) -> SparseMatrix:
    rows, cols, nnz = struct.unpack("<QQQ", _read_exact(fh, 24))
    indptr = np.frombuffer(_read_exact(fh, 8 * (rows + 1)), dtype="<i8")
    indices = np.frombuffer(_read_exact(fh, 8 * nnz), dtype="<i8")
    data = np.frombuffer(_read_exact(fh, 8 * nnz), dtype="<f8")
    return SparseMatrix(rows, cols, indptr, indices, data)


def _basis_key(basis: WaveletBasis, dataset_id: str) -> dict:
    return {
        "dataset": dataset_id,
        "s": basis.scale,
        "t": basis.threshold,
        "method": basis.method,
        "order": basis.order,
    }


def save_basis(path, basis: WaveletBasis, dataset_id: str = "") -> None:
    key = json.dumps(_basis_key(basis, dataset_id), sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(key)))
        fh.write(key)
        _write_csr(fh, basis.psi)
        _write_csr(fh, basis.psi_inv)
    tmp.replace(path)


def load_basis(path) -> tuple[WaveletBasis, str]:
    """Read a cached basis; returns it together with the stored dataset id."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a wavelet cache file")
        (klen,) = struct.unpack("<Q", _read_exact(fh, 8))
        key = json.loads(_read_exact(fh, klen))
        psi = _read_csr(fh)
        psi_inv = _read_csr(fh)
    basis = WaveletBasis(psi, psi_inv, key["s"], key["t"], key["method"], key["order"])
    return basis, key["dataset"]


def cache_filename(dataset_id: str, s: float, t: float, method: str, order: int | None) -> str:
    key = json.dumps(
        {"dataset": dataset_id, "s": float(s), "t": float(t), "method": method, "order": order},
        sort_keys=True,
    )
    return "wavelet-" + hashlib.sha256(key.encode()).hexdigest()[:20] + ".bin"


def cached_basis(
    bundle: LaplacianBundle,
    s: float,
    t: float,
    method: str = "exact",
    order: int | None = None,
    cache_dir=None,
    dataset_id: str = "",
) -> WaveletBasis:
    """Compute a basis, or load it from ``cache_dir`` when an entry with the same key exists."""
    if method not in ("exact", "chebyshev"):
        raise ValueError(f"unknown wavelet method {method!r}")
    if method == "exact":
        order = None
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / cache_filename(dataset_id, s, t, method, order)
        if path.exists():
            basis, _ = load_basis(path)
            if basis.n == bundle.n:
                return basis
    if method == "exact":
        basis = wavelet_exact(bundle, s, t)
    else:
        basis = wavelet_chebyshev(bundle, s, t, order)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_basis(path, basis, dataset_id)
    return basis
