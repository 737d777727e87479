"""Acceptance gate.

Every criterion prints exactly one ``[acceptance NN] PASS|FAIL|SKIP`` line
(run with ``-s`` to see them inline; they are also collected into the
terminal summary).  Dataset-backed criteria look for ``cora.*`` and
``citeseer.*`` content/cites files under ``$DEEPGWC_DATA_DIR`` and skip with
a warning when they are absent.
"""

import time
import warnings

import numpy as np
import pytest

from conftest import dataset_files
from deepgwc.data import load_content_cites, normalize_features, random_graph, rate_split, sampled_split
from deepgwc.data import standard_split, synthetic_two_clique
from deepgwc.graph import build_laplacian
from deepgwc.linalg import eigh_sym, frobenius_rel_error
from deepgwc.model import MODES, ModelConfig, init_parameters, layer_forward, with_mode
from deepgwc.propagation import FilterConfig, assemble, scalar_absorption_check
from deepgwc.train import TrainSchedule, finite_difference_check, train
from deepgwc.wavelet import wavelet_dense_chebyshev, wavelet_dense_exact, wavelet_exact
from oracles import gcn_layer, gwnn_layer

RESULTS = {}


def report(num, title, ok, detail):
    status = "PASS" if ok else "FAIL"
    line = f"[acceptance {num:02d}] {status} {title}: {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def skip(num, title, why):
    line = f"[acceptance {num:02d}] SKIP {title}: {why}"
    RESULTS[num] = line
    print(line)
    warnings.warn(line)
    pytest.skip(why)


def graph_set(count=50, seed=0):
    """Seeded random graphs with n <= 100 and varied edge density."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(2, 101))
        p = float(rng.uniform(0.02, 0.3))
        out.append(random_graph(n, p, features=2, classes=2, seed=int(rng.integers(2**31))))
    return out


# --- 1-6: numerical criteria ----------------------------------------------------


def test_01_wavelet_inverse_pair():
    start = time.perf_counter()
    worst = 0.0
    for g in graph_set():
        psi, psi_inv = wavelet_dense_exact(build_laplacian(g), 1.0)
        worst = max(worst, float(np.linalg.norm(psi @ psi_inv - np.eye(g.n))))
    took = time.perf_counter() - start
    report(1, "wavelet inverse pair", worst <= 1e-8 and took < 10,
           f"max ||psi psi^-1 - I||_F = {worst:.2e} (<= 1e-8) over 50 graphs in {took:.1f}s")


def test_02_eigensolver():
    start = time.perf_counter()
    worst_res, lo, hi = 0.0, np.inf, -np.inf
    for g in graph_set():
        lap = build_laplacian(g).laplacian_dense()
        w, u = eigh_sym(lap)
        worst_res = max(worst_res, np.linalg.norm(lap - (u * w) @ u.T) / max(np.linalg.norm(lap), 1e-300))
        lo, hi = min(lo, w[0]), max(hi, w[-1])
    took = time.perf_counter() - start
    ok = worst_res <= 1e-10 and lo >= -1e-9 and hi <= 2 + 1e-9 and took < 10
    report(2, "eigensolver", ok,
           f"residual {worst_res:.2e} (<= 1e-10), spectrum [{lo:.2e}, {hi:.6f}] in {took:.1f}s")


# measured on this oracle: order-30 error ~6e-15 (50-node graphs, s <= 1.5);
# the 1e-6 bound is kept and the monotone check carries a 1e-13 roundoff slack
CHEB_BOUND = 1e-6
CHEB_SLACK = 1e-13


def test_03_chebyshev_vs_exact():
    start = time.perf_counter()
    worst, monotone = 0.0, True
    for seed in range(10):
        bundle = build_laplacian(random_graph(50, 0.1, seed=seed))
        for s in (0.5, 1.0, 1.5):
            exact, _ = wavelet_dense_exact(bundle, s)
            errs = [frobenius_rel_error(wavelet_dense_chebyshev(bundle, s, k)[0], exact) for k in (5, 10, 20, 30)]
            worst = max(worst, errs[-1])
            monotone &= all(b <= a + CHEB_SLACK for a, b in zip(errs, errs[1:]))
    took = time.perf_counter() - start
    report(3, "Chebyshev vs exact", worst <= CHEB_BOUND and monotone and took < 30,
           f"order-30 rel error {worst:.2e} (<= {CHEB_BOUND:g}), monotone={monotone}, {took:.1f}s")


def test_04_reduction_equivalences():
    rng = np.random.default_rng(4)
    gcn_err = gwnn_err = 0.0
    for seed in range(20):
        g = random_graph(15, 0.25, seed=seed)
        bundle = build_laplacian(g)
        basis = wavelet_exact(bundle, 1.0, 0.0)
        f = float(rng.uniform(0.2, 1.6))
        h, h0, w = rng.standard_normal((15, 8)), rng.standard_normal((15, 8)), rng.standard_normal((8, 8))
        op0 = assemble(bundle, None, 0.0)
        op1 = assemble(bundle, basis, 1.0, FilterConfig(f))
        gcn_err = max(gcn_err, np.abs(layer_forward(h, h0, op0, w, 0.0, 1.0)
                                      - gcn_layer(bundle.propagation.to_dense(), h, w)).max())
        ref = gwnn_layer(basis.psi.to_dense(), basis.psi_inv.to_dense(), f, h, w)
        gwnn_err = max(gwnn_err, np.abs(layer_forward(h, h0, op1, w, 0.0, 1.0) - ref).max())
    report(4, "reduction equivalences", gcn_err <= 1e-12 and gwnn_err <= 1e-12,
           f"GCN max diff {gcn_err:.2e}, GWNN max diff {gwnn_err:.2e} (<= 1e-12)")


def test_05_gradient_check():
    start = time.perf_counter()
    worst, per_mode = 0.0, {}
    for k, mode in enumerate(("gcn", "gwnn", "gcnii-like", "deepgwc")):
        g = random_graph(12, 0.3, features=5, classes=3, seed=100 + k)
        cfg = with_mode(ModelConfig(5, 3, layers=3, hidden=6, threshold_t=0.0, dropout=0.3), mode)
        bundle = build_laplacian(g)
        basis = wavelet_exact(bundle, cfg.scale_s, 0.0) if cfg.gamma > 0 else None
        op = assemble(bundle, basis, cfg.gamma, FilterConfig(cfg.filter_f))
        res = finite_difference_check(g.features, g.labels, np.arange(12), init_parameters(cfg, k), cfg, op,
                                      samples=50, h=1e-5, seed=k)
        assert res["checked"] == 50
        per_mode[mode] = res["max_rel_error"]
        worst = max(worst, res["max_rel_error"])
    took = time.perf_counter() - start
    detail = ", ".join(f"{m} {e:.1e}" for m, e in per_mode.items())
    report(5, "gradient check", worst <= 1e-4 and took < 60, f"max rel error {worst:.2e} ({detail}); {took:.1f}s")


def test_06_scalar_absorption():
    worst = 0.0
    for seed, (gamma, f) in enumerate([(0.4, 0.4), (0.7, 1.6), (1.0, 0.8), (0.1, 1.2)]):
        bundle = build_laplacian(random_graph(20, 0.2, seed=seed))
        for t in (0.0, 1e-4):
            worst = max(worst, scalar_absorption_check(wavelet_exact(bundle, 1.0, t), gamma, f))
    report(6, "scalar absorption", worst <= 1e-12, f"max entrywise gap {worst:.2e} (<= 1e-12)")


# --- 7-10, 12: dataset-backed criteria ------------------------------------------------


def _load(name):
    files = dataset_files(name)
    if files is None:
        return None
    return load_content_cites(*files)


@pytest.mark.dataset
def test_07_density_reproduction():
    cora, citeseer = _load("cora"), _load("citeseer")
    if cora is None or citeseer is None:
        skip(7, "density reproduction", "cora/citeseer files not found under $DEEPGWC_DATA_DIR")
    start = time.perf_counter()
    d_cora = wavelet_exact(build_laplacian(cora), 1.0, 1e-4).density_psi
    took = time.perf_counter() - start
    d_cite = wavelet_exact(build_laplacian(citeseer), 0.7, 1e-5).density_psi
    ok = abs(d_cora - 0.0281) <= 0.005 and abs(d_cite - 0.0152) <= 0.005
    report(7, "density reproduction", ok,
           f"Cora {100 * d_cora:.2f}% (2.81 +- 0.5), Citeseer {100 * d_cite:.2f}% (1.52 +- 0.5); Cora basis {took:.0f}s")


CORA = dict(layers=64, hidden=64, alpha=0.3, eta=0.8, gamma=0.4, filter_f=0.4, scale_s=1.0, threshold_t=1e-4)
CITESEER = dict(layers=64, hidden=256, alpha=0.1, eta=0.8, gamma=0.4, filter_f=0.4, scale_s=0.7, threshold_t=1e-5)


def _run(g, split, settings, mode="deepgwc", seed=0, **over):
    cfg = with_mode(ModelConfig(g.num_features, g.num_classes, **{**settings, **over}), mode)
    bundle = build_laplacian(g)
    basis = wavelet_exact(bundle, cfg.scale_s, cfg.threshold_t) if cfg.gamma > 0 else None
    op = assemble(bundle, basis, cfg.gamma, FilterConfig(cfg.filter_f))
    return train(normalize_features(g.features), g.labels, split, cfg, op, TrainSchedule(), seed=seed)


@pytest.mark.dataset
@pytest.mark.slow
def test_08_standard_split_accuracy():
    cora, citeseer = _load("cora"), _load("citeseer")
    if cora is None or citeseer is None:
        skip(8, "standard-split accuracy", "cora/citeseer files not found under $DEEPGWC_DATA_DIR")
    acc_cora = _run(cora, standard_split(cora), CORA).test_accuracy
    acc_cite = _run(citeseer, standard_split(citeseer), CITESEER).test_accuracy
    ok = abs(acc_cora - 0.864) <= 0.015 and abs(acc_cite - 0.750) <= 0.015
    report(8, "standard-split accuracy", ok,
           f"Cora {100 * acc_cora:.1f}% (86.4 +- 1.5), Citeseer {100 * acc_cite:.1f}% (75.0 +- 1.5)")


@pytest.mark.dataset
@pytest.mark.slow
def test_09_over_smoothing_contrast():
    cora = _load("cora")
    if cora is None:
        skip(9, "over-smoothing contrast", "cora files not found under $DEEPGWC_DATA_DIR")
    split = standard_split(cora)
    gcn = {d: _run(cora, split, CORA, "gcn", layers=d).test_accuracy for d in (2, 32)}
    deep = {d: _run(cora, split, CORA, layers=d).test_accuracy for d in (2, 4, 8, 16, 32, 64)}
    ok = gcn[2] - gcn[32] >= 0.10 and max(deep.values()) - deep[32] <= 0.02
    report(9, "over-smoothing contrast", ok,
           f"gcn 2/32 layers {100 * gcn[2]:.1f}/{100 * gcn[32]:.1f}%, deepgwc@32 {100 * deep[32]:.1f}% "
           f"vs best {100 * max(deep.values()):.1f}%")


@pytest.mark.dataset
@pytest.mark.slow
def test_10_low_label_rate():
    cora = _load("cora")
    if cora is None:
        skip(10, "low label rate", "cora files not found under $DEEPGWC_DATA_DIR")
    split = rate_split(cora, 0.005, seed=0)
    deep = _run(cora, split, CORA).test_accuracy
    gcn = _run(cora, split, CORA, "gcn", layers=2).test_accuracy
    report(10, "low label rate", deep - gcn >= 0.08,
           f"0.5% labels: deepgwc {100 * deep:.1f}% vs gcn {100 * gcn:.1f}% (gap >= 8pp)")


# --- 11: synthetic oracle -------------------------------------------------------


def test_11_two_clique_every_mode():
    # L=2, d=64 calibrated over 10 seeds x 5 modes (all perfect); narrower or
    # deeper bias-free stacks occasionally lose a class in gwnn mode
    g = synthetic_two_clique(20, seed=0)
    split = sampled_split(g, 4, seed=0)
    bundle = build_laplacian(g)
    basis = wavelet_exact(bundle, 1.0, 1e-4)
    start = time.perf_counter()
    accs = {}
    for mode in MODES:
        cfg = with_mode(ModelConfig(3, 2, layers=2, hidden=64, dropout=0.5, threshold_t=1e-4), mode)
        op = assemble(bundle, basis if cfg.gamma > 0 else None, cfg.gamma, FilterConfig(cfg.filter_f))
        rep = train(g.features, g.labels, split, cfg, op, TrainSchedule(200, 200, 0.01), seed=0)
        accs[mode] = (rep.test_accuracy, rep.best_epoch)
    took = time.perf_counter() - start
    ok = all(a == 1.0 and e <= 200 for a, e in accs.values()) and took < 10
    detail = ", ".join(f"{m} {a:.2f}@{e}" for m, (a, e) in accs.items())
    report(11, "two-clique oracle", ok, f"{detail}; {took:.1f}s")


@pytest.mark.dataset
@pytest.mark.slow
def test_12_determinism():
    cora = _load("cora")
    if cora is None:
        skip(12, "determinism", "cora files not found under $DEEPGWC_DATA_DIR")
    split = standard_split(cora)
    a = _run(cora, split, CORA, seed=7).summary()
    b = _run(cora, split, CORA, seed=7).summary()
    report(12, "determinism", a == b, "two seeded Cora runs give identical summary records" if a == b
           else "summary records differ")
