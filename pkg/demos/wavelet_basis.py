"""
Heat-kernel wavelets on a small graph
=====================================

Builds the wavelet basis of a ring-with-chords graph and looks at how
localized it is, how the threshold trades sparsity for exactness, and how
close the Chebyshev route gets to the eigendecomposition.
"""

import numpy as np

from deepgwc.data import random_graph
from deepgwc.graph import build_laplacian
from deepgwc.linalg import eigh_sym, frobenius_rel_error
from deepgwc.wavelet import basis_stats, wavelet_chebyshev, wavelet_dense_chebyshev, wavelet_dense_exact, wavelet_exact

g = random_graph(60, 0.06, seed=3)
bundle = build_laplacian(g)
print(f"graph: {g.n} nodes, {g.m} edges")

# the normalized Laplacian spectrum lives in [0, 2]
w, _ = eigh_sym(bundle.laplacian_dense())
print(f"eigenvalues: min {w[0]:.2e}, max {w[-1]:.4f}")

# psi_s spreads heat from each node; larger s means wider support
for s in (0.5, 1.0, 2.0):
    psi, psi_inv = wavelet_dense_exact(bundle, s)
    frac = np.mean(np.abs(psi) >= 1e-4)
    inv_err = np.linalg.norm(psi @ psi_inv - np.eye(g.n))
    print(f"s={s}: entries >= 1e-4: {100 * frac:5.1f}%   ||psi psi^-1 - I||_F = {inv_err:.1e}")

# thresholding buys sparsity at the cost of an inexact inverse pair
for t in (0.0, 1e-4, 1e-2):
    st = basis_stats(wavelet_exact(bundle, 1.0, t))
    print(f"t={t:g}: density psi {100 * st['density_psi']:.1f}%, inverse residual {st['max_offdiag_residual']:.1e}")

# Chebyshev route: no eigendecomposition, only sparse products with L
exact, _ = wavelet_dense_exact(bundle, 1.0)
for order in (5, 10, 20, 30):
    approx, _ = wavelet_dense_chebyshev(bundle, 1.0, order)
    print(f"order {order:2d}: relative Frobenius error {frobenius_rel_error(approx, exact):.1e}")

basis = wavelet_chebyshev(bundle, 1.0, 1e-4, order=30)
print(f"chebyshev basis ({basis.method_label}) density {100 * basis.density_psi:.1f}%")
