import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepgwc.graph import Graph, build_laplacian
from deepgwc.linalg import ShapeError
from deepgwc.propagation import FilterConfig, PropagationOperator, assemble, scalar_absorption_check
from deepgwc.wavelet import wavelet_exact
from oracles import dense_adjacency, heat_wavelets, normalized_laplacian, random_edges, renormalized_adjacency


def setup(n, p, seed, s=1.0, t=0.0):
    edges = random_edges(n, p, np.random.default_rng(seed))
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.zeros((n, 1)), np.zeros(n, dtype=int))
    bundle = build_laplacian(g)
    return bundle, wavelet_exact(bundle, s, t), edges


PATH2 = build_laplacian(Graph(2, np.array([[0, 1]]), np.zeros((2, 1)), np.zeros(2, dtype=int)))


@pytest.mark.parametrize("f", [0.0, -1.0, np.inf, np.nan])
def test_filter_validation(f):
    with pytest.raises(ValueError):
        FilterConfig(f)


def test_gamma_zero_is_fourier_operator():
    bundle, basis, _ = setup(12, 0.3, 0)
    for b in (None, basis):
        op = assemble(bundle, b, 0.0, FilterConfig(3.0))
        assert op.provenance == "fourier-only"
        assert np.array_equal(op.matrix.to_dense(), bundle.propagation.to_dense())


def test_gamma_one_identity():
    bundle, basis, _ = setup(15, 0.25, 2)
    op = assemble(bundle, basis, 1.0, FilterConfig(1.0))
    assert op.provenance == "wavelet-only"
    assert np.max(np.abs(op.matrix.to_dense() - np.eye(15))) <= 1e-8


def test_path2_hand_example():
    basis = wavelet_exact(PATH2, 1.0, 0.0)
    op = assemble(PATH2, basis, 0.5, FilterConfig(2.0))
    assert op.provenance == "combined"
    assert np.allclose(op.matrix.to_dense(), [[1.25, 0.25], [0.25, 1.25]], atol=1e-12)


def test_errors():
    bundle, basis, _ = setup(6, 0.5, 1)
    with pytest.raises(ValueError):
        assemble(bundle, None, 0.3)
    with pytest.raises(ValueError):
        assemble(bundle, basis, 1.2)
    with pytest.raises(ValueError):
        assemble(bundle, basis, -0.1)
    _, other, _ = setup(7, 0.5, 1)
    with pytest.raises(ShapeError):
        assemble(bundle, other, 0.5)


@given(st.integers(2, 25), st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.1, 2.0))
def test_matches_dense_definition(n, seed, gamma, f):
    bundle, basis, edges = setup(n, 0.3, seed, t=1e-3)
    op = assemble(bundle, basis, gamma, FilterConfig(f))
    psi, psi_inv = basis.psi.to_dense(), basis.psi_inv.to_dense()
    wav = psi @ (f * np.eye(n)) @ psi_inv
    ref = gamma * 0.5 * (wav + wav.T) + (1 - gamma) * renormalized_adjacency(dense_adjacency(n, edges))
    assert np.allclose(op.matrix.to_dense(), ref, atol=1e-12)


@given(st.integers(2, 25), st.integers(0, 2**31), st.floats(0.0, 1.0))
def test_affine_in_gamma(n, seed, gamma):
    bundle, basis, _ = setup(n, 0.3, seed, t=1e-3)
    f = FilterConfig(0.7)
    mid = assemble(bundle, basis, gamma, f).matrix.to_dense()
    ends = gamma * assemble(bundle, basis, 1.0, f).matrix.to_dense() + (1 - gamma) * assemble(
        bundle, basis, 0.0, f
    ).matrix.to_dense()
    assert np.max(np.abs(mid - ends)) <= 1e-12


@given(st.integers(2, 25), st.integers(0, 2**31), st.floats(0.0, 0.1))
def test_symmetric_after_threshold(n, seed, t):
    bundle, basis, _ = setup(n, 0.3, seed, t=t)
    m = assemble(bundle, basis, 0.4, FilterConfig(0.4)).matrix.to_dense()
    assert np.array_equal(m, m.T)


def test_untruncated_pair_symmetric_before_symmetrisation():
    bundle, basis, _ = setup(20, 0.2, 3)
    prod = basis.psi.to_dense() @ basis.psi_inv.to_dense()
    assert np.max(np.abs(prod - prod.T)) <= 1e-9


def test_no_explicit_zeros(rng):
    bundle, basis, _ = setup(20, 0.15, 9, t=1e-2)
    op = assemble(bundle, basis, 0.4)
    assert np.all(op.matrix.data != 0)


def test_scalar_absorption_examples():
    basis = wavelet_exact(PATH2, 1.0, 0.0)
    assert scalar_absorption_check(basis, 0.0, 0.4) == 0.0
    assert scalar_absorption_check(basis, 0.4, 0.4) <= 1e-12
    _, b10, _ = setup(10, 0.3, 4)
    assert scalar_absorption_check(b10, 0.7, 1.6) <= 1e-12


def test_apply_matches_dense_both_kernels(rng):
    bundle, basis, _ = setup(30, 0.1, 5, t=0.05)
    for gamma in (0.0, 0.4):
        op = assemble(bundle, basis, gamma)
        h = rng.standard_normal((30, 4))
        m = op.matrix.to_dense()
        assert np.allclose(op.apply(h), m @ h, atol=1e-13)
        assert np.allclose(op.apply_transpose(h), m.T @ h, atol=1e-13)
    with pytest.raises(ShapeError):
        op.apply(np.zeros((3, 4)))


def test_identity_operator():
    op = PropagationOperator.identity(4)
    h = np.arange(8.0).reshape(4, 2)
    assert np.array_equal(op.apply(h), h)
