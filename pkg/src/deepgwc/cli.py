"""Command-line front end.

Subcommands: ``train``, ``sweep-depth``, ``sweep-rate``, ``wavelet-stats``,
``gradcheck`` and ``dump-embeddings``.  Settings come from built-in defaults,
then an optional ``--config`` file of ``key = value`` lines, then explicit
flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import (
    load_content_cites,
    normalize_features,
    random_graph,
    rate_split,
    standard_split,
    synthetic_two_clique,
)
from .graph import build_laplacian
from .model import (
    MODES,
    ModelConfig,
    forward,
    init_parameters,
    load_checkpoint,
    reduction_mode,
    save_checkpoint,
    with_mode,
)
from .propagation import FilterConfig, assemble
from .train import TrainSchedule, backward, finite_difference_check, train
from .wavelet import basis_stats, cached_basis

log = logging.getLogger("deepgwc")

DEFAULTS = {
    "dataset-content": None,
    "dataset-cites": None,
    "synthetic": None,
    "mode": "deepgwc",
    "layers": 64,
    "hidden": 64,
    "alpha": 0.1,
    "eta": 0.5,
    "gamma": 0.4,
    "filter-f": 0.4,
    "scale-s": 1.0,
    "threshold-t": 1e-4,
    "dropout": 0.6,
    "lr": 0.001,
    "weight-decay": 5e-4,
    "split": "standard",
    "seed": 0,
    "jobs": 1,
    "epochs": 1500,
    "patience": 100,
    "out": None,
    "wavelet": "exact",
    "cache-dir": None,
    "normalize-features": True,
    "checkpoint": None,
    "depths": "2,4,8,16,32,64",
    "rates": "0.005,0.01,0.02,0.03,0.04",
    "samples": 50,
}

# settings used for the reported results (hidden size, depth, residual and
# wavelet parameters per dataset)
PRESETS = {
    "cora": dict(layers=64, hidden=64, alpha=0.3, eta=0.8, gamma=0.4, **{"filter-f": 0.4, "scale-s": 1.0, "threshold-t": 1e-4}),
    "citeseer": dict(layers=64, hidden=256, alpha=0.1, eta=0.8, gamma=0.4, **{"filter-f": 0.4, "scale-s": 0.7, "threshold-t": 1e-5}),
    "pubmed": dict(layers=32, hidden=512, alpha=0.1, eta=0.4, gamma=0.4, **{"filter-f": 0.6, "scale-s": 0.5, "threshold-t": 1e-7}),
}

INT_KEYS = {"layers", "hidden", "seed", "jobs", "epochs", "patience", "samples", "synthetic"}
FLOAT_KEYS = {"alpha", "eta", "gamma", "filter-f", "scale-s", "threshold-t", "dropout", "lr", "weight-decay"}
BOOL_KEYS = {"normalize-features"}


class CLIError(Exception):
    pass


# --- configuration ----------------------------------------------------------


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CLIError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in DEFAULTS and key != "preset":
                raise CLIError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise CLIError(f"bad value for {key}: {value!r}") from None
    if key in BOOL_KEYS and isinstance(value, str):
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise CLIError(f"bad boolean for {key}: {value!r}")
        return low in ("true", "1", "yes")
    return value


def resolve_config(args) -> dict:
    """Defaults < preset < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    file_cfg = parse_config_file(args.config) if getattr(args, "config", None) else {}
    preset = getattr(args, "preset", None) or file_cfg.pop("preset", None)
    if preset:
        if preset not in PRESETS:
            raise CLIError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        cfg.update(PRESETS[preset])
        cfg["preset"] = preset
    cfg.update(file_cfg)
    for key in DEFAULTS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return {k: _coerce(k, v) for k, v in cfg.items()}


def _model_config(cfg: dict, input_dim: int, classes: int, mode: str | None = None) -> ModelConfig:
    mc = ModelConfig(
        input_dim=input_dim,
        classes=classes,
        layers=cfg["layers"],
        hidden=cfg["hidden"],
        alpha=cfg["alpha"],
        eta=cfg["eta"],
        gamma=cfg["gamma"],
        filter_f=cfg["filter-f"],
        scale_s=cfg["scale-s"],
        threshold_t=cfg["threshold-t"],
        dropout=cfg["dropout"],
    )
    return with_mode(mc, mode or cfg["mode"])


def _wavelet_method(spec: str) -> tuple[str, int | None]:
    if spec == "exact":
        return "exact", None
    if spec.startswith("cheby:"):
        try:
            order = int(spec.split(":", 1)[1])
        except ValueError:
            raise CLIError(f"bad Chebyshev order in {spec!r}") from None
        return "chebyshev", order
    raise CLIError(f"--wavelet must be 'exact' or 'cheby:<order>', got {spec!r}")


def holdout_sizes(n: int, n_train: int, n_val: int = 500, n_test: int = 1000) -> tuple[int, int]:
    """Validation/test sizes; graphs too small for 500/1000 get a 1:2 split of the rest."""
    rest = n - n_train
    if rest >= n_val + n_test:
        return n_val, n_test
    val = rest // 3
    return val, rest - val


def _split(g, cfg):
    spec = cfg["split"]
    if spec == "standard":
        # tiny graphs (e.g. --synthetic) keep half of each class for hold-out
        per_class = min(20, int(np.bincount(g.labels).min()) // 2)
        if per_class < 20:
            log.warning("standard split: only %d training nodes per class on this graph", per_class)
        val, test = holdout_sizes(g.n, per_class * g.num_classes)
        return standard_split(g, cfg["seed"], per_class, val, test)
    if spec.startswith("rate:"):
        try:
            rate = float(spec.split(":", 1)[1])
        except ValueError:
            raise CLIError(f"bad label rate in {spec!r}") from None
        val, test = holdout_sizes(g.n, int(round(rate * g.n)))
        return rate_split(g, rate, cfg["seed"], val, test)
    raise CLIError(f"--split must be 'standard' or 'rate:<r>', got {spec!r}")


class Experiment:
    """A loaded dataset plus the operators shared by every run on it."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        if cfg.get("synthetic"):
            self.graph = synthetic_two_clique(cfg["synthetic"], seed=cfg["seed"])
            self.dataset_id = f"two-clique-{cfg['synthetic']}-{cfg['seed']}"
        else:
            if not cfg["dataset-content"] or not cfg["dataset-cites"]:
                raise CLIError("need --dataset-content and --dataset-cites (or --synthetic K)")
            self.graph = load_content_cites(cfg["dataset-content"], cfg["dataset-cites"])
            self.dataset_id = self.graph.meta["fingerprint"]
            if self.graph.dropped_edges:
                log.info("dropped %d citations with unknown endpoints", self.graph.dropped_edges)
        feats = self.graph.features
        self.features = normalize_features(feats) if cfg["normalize-features"] else feats
        self.bundle = build_laplacian(self.graph)
        self._bases = {}

    def basis(self, s: float, t: float):
        method, order = _wavelet_method(self.cfg["wavelet"])
        key = (s, t, method, order)
        if key not in self._bases:
            start = time.perf_counter()
            self._bases[key] = cached_basis(
                self.bundle, s, t, method, order, self.cfg["cache-dir"], self.dataset_id
            )
            log.info("wavelet basis (s=%g, t=%g, %s) ready in %.1fs", s, t, method, time.perf_counter() - start)
        return self._bases[key]

    def operator(self, mc: ModelConfig):
        basis = self.basis(mc.scale_s, mc.threshold_t) if mc.gamma > 0 else None
        return assemble(self.bundle, basis, mc.gamma, FilterConfig(mc.filter_f)), basis


def run_seed(base_seed: int, run_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{run_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _schedule(cfg) -> TrainSchedule:
    return TrainSchedule(cfg["epochs"], cfg["patience"], cfg["lr"], cfg["weight-decay"])


def _run_one(exp: Experiment, cfg: dict, mode: str, split, seed: int, extra: dict):
    mc = _model_config(cfg, exp.features.shape[1], exp.graph.num_classes, mode)
    op, basis = exp.operator(mc)
    report = train(exp.features, exp.graph.labels, split, mc, op, _schedule(cfg), seed=seed)
    report.extra.update(
        {
            "density_psi": basis.density_psi if basis is not None else None,
            "requested_mode": mode,
            "split": {"spec": cfg["split"], "sizes": list(split.sizes()), "label_rate": split.label_rate},
            "resolved": {k: v for k, v in cfg.items()},
            "dataset": exp.dataset_id,
            **extra,
        }
    )
    return report, mc


class RecordWriter:
    """Writes one JSON record per line, flushing after each so records land whole."""

    def __init__(self, path):
        self.fh = open(path, "a" if path else "w", encoding="utf-8") if path else sys.stdout
        self.close_after = path is not None

    def write(self, record: dict):
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        if self.close_after:
            self.fh.close()


def _fresh_output(path):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("")


# --- commands ---------------------------------------------------------------


def cmd_train(cfg: dict) -> int:
    exp = Experiment(cfg)
    split = _split(exp.graph, cfg)
    report, mc = _run_one(exp, cfg, cfg["mode"], split, cfg["seed"], {})
    _fresh_output(cfg["out"])
    writer = RecordWriter(cfg["out"])
    try:
        for rec in report.records():
            writer.write(rec)
    finally:
        writer.close()
    ckpt = cfg["checkpoint"] or (cfg["out"] + ".ckpt" if cfg["out"] else None)
    if ckpt:
        save_checkpoint(ckpt, report.params, {"model": mc.to_dict(), "resolved": cfg})
    log.info("test accuracy %.4f at epoch %d (%.1fs)", report.test_accuracy, report.best_epoch, report.wall_time)
    return 0


_SWEEP = {}


def _sweep_task(task):
    exp, cfg = _SWEEP["exp"], _SWEEP["cfg"]
    mode, depth, rate = task
    run_cfg = dict(cfg, layers=depth) if depth is not None else dict(cfg)
    if rate is not None:
        run_cfg["split"] = f"rate:{rate}"
    split = _split(exp.graph, run_cfg)
    run_id = f"{mode}:{depth}:{rate}"
    seed = run_seed(cfg["seed"], run_id)
    extra = {"run_id": run_id, "run_seed": seed}
    if depth is not None:
        extra["depth"] = depth
    if rate is not None:
        extra["label_rate"] = rate
    report, _ = _run_one(exp, run_cfg, mode, split, seed, extra)
    return report.summary()


def _run_sweep(cfg: dict, tasks) -> int:
    exp = Experiment(cfg)
    # pay for the wavelet basis once, before any worker starts
    for mode in {t[0] for t in tasks}:
        mc = _model_config(cfg, exp.features.shape[1], exp.graph.num_classes, mode)
        if mc.gamma > 0:
            exp.basis(mc.scale_s, mc.threshold_t)
    _SWEEP.update(exp=exp, cfg=cfg)
    _fresh_output(cfg["out"])
    writer = RecordWriter(cfg["out"])
    try:
        if cfg["jobs"] > 1 and len(tasks) > 1 and hasattr(os, "fork"):
            import multiprocessing as mp

            with ProcessPoolExecutor(cfg["jobs"], mp_context=mp.get_context("fork")) as pool:
                for rec in pool.map(_sweep_task, tasks):
                    writer.write(rec)
        else:
            for task in tasks:
                writer.write(_sweep_task(task))
    finally:
        writer.close()
        _SWEEP.clear()
    return 0


def _modes(cfg) -> list[str]:
    modes = [m.strip() for m in str(cfg["mode"]).split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise CLIError(f"unknown mode {m!r}; expected one of {', '.join(MODES)}")
    return modes


def _int_list(text, name) -> list[int]:
    try:
        vals = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise CLIError(f"bad {name} list {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise CLIError(f"{name} must be positive integers")
    return vals


def cmd_sweep_depth(cfg: dict, depths=None) -> int:
    depths = depths or _int_list(cfg["depths"], "depths")
    return _run_sweep(cfg, [(m, d, None) for m in _modes(cfg) for d in depths])


def cmd_sweep_rate(cfg: dict, rates=None) -> int:
    if rates is None:
        try:
            rates = [float(x) for x in str(cfg["rates"]).split(",") if x.strip()]
        except ValueError:
            raise CLIError(f"bad rates list {cfg['rates']!r}") from None
    return _run_sweep(cfg, [(m, None, r) for m in _modes(cfg) for r in rates])


def _lambda_max_estimate(lap, iters=200, seed=0) -> float:
    x = np.random.default_rng(seed).standard_normal(lap.rows)
    lam = 0.0
    for _ in range(iters):
        y = lap.scipy @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        lam = float(x @ y / (x @ x))
        x = y / norm
    return lam


def cmd_wavelet_stats(cfg: dict) -> int:
    exp = Experiment(cfg)
    basis = exp.basis(cfg["scale-s"], cfg["threshold-t"])
    columns = None if exp.bundle.n <= 4000 else 256
    stats = basis_stats(basis, columns=columns, seed=cfg["seed"])
    if basis.method == "exact":
        lam = exp.bundle.spectrum[0]
        stats["eigenvalue_range"] = [float(lam[0]), float(lam[-1])]
    else:
        stats["eigenvalue_range"] = [0.0, _lambda_max_estimate(exp.bundle.laplacian)]
    stats.update(
        {
            "type": "wavelet-stats",
            "n": exp.bundle.n,
            "scale_s": basis.scale,
            "threshold_t": basis.threshold,
            "method": basis.method_label,
            "dataset": exp.dataset_id,
        }
    )
    _fresh_output(cfg["out"])
    writer = RecordWriter(cfg["out"])
    writer.write(stats)
    writer.close()
    return 0


GRADCHECK_MODES = ("gcn", "gwnn", "gcnii-like", "deepgwc")
GRADCHECK_TOL = 1e-4


def gradcheck_suite(cfg: dict, corrupt: bool = False, graphs: int = 1) -> list[dict]:
    """Finite-difference check of every reduction mode on random 12-node graphs."""
    results = []
    for mode in GRADCHECK_MODES:
        for k in range(graphs):
            seed = run_seed(cfg["seed"], f"gradcheck:{mode}:{k}")
            g = random_graph(12, 0.3, features=5, classes=3, seed=seed)
            bundle = build_laplacian(g)
            base = ModelConfig(
                input_dim=5, classes=3, layers=3, hidden=6, alpha=cfg["alpha"], eta=cfg["eta"],
                gamma=cfg["gamma"], filter_f=cfg["filter-f"], scale_s=cfg["scale-s"],
                threshold_t=0.0, dropout=0.3,
            )
            mc = with_mode(base, mode)
            basis = cached_basis(bundle, mc.scale_s, 0.0) if mc.gamma > 0 else None
            op = assemble(bundle, basis, mc.gamma, FilterConfig(mc.filter_f))
            params = init_parameters(mc, seed)
            mask = np.arange(g.n)
            grads = None
            if corrupt:
                trace = forward(g.features, params, mc, op, "train", seed=seed + 1)
                grads = backward(trace, g.labels, mask, params, mc, op)
                grads.output_weights = grads.output_weights * 1.01 + 1e-3
                grads.layer_weights = [w * 1.01 + 1e-3 for w in grads.layer_weights]
                grads.input_weights = grads.input_weights * 1.01 + 1e-3
            res = finite_difference_check(
                g.features, g.labels, mask, params, mc, op, samples=cfg["samples"], seed=seed, grads=grads
            )
            res.pop("details")
            res.update(requested_mode=mode, graph_seed=seed)
            results.append(res)
    return results


def cmd_gradcheck(cfg: dict, corrupt: bool = False) -> int:
    results = gradcheck_suite(cfg, corrupt=corrupt)
    worst = max(r["max_rel_error"] for r in results)
    _fresh_output(cfg["out"])
    writer = RecordWriter(cfg["out"])
    for r in results:
        writer.write({"type": "gradcheck", **r})
    writer.write({"type": "gradcheck-summary", "max_rel_error": worst, "tolerance": GRADCHECK_TOL,
                  "passed": worst <= GRADCHECK_TOL})
    writer.close()
    print(f"max relative error {worst:.3e} (tolerance {GRADCHECK_TOL:g})", file=sys.stderr)
    return 0 if worst <= GRADCHECK_TOL else 1


def cmd_dump_embeddings(cfg: dict, checkpoint) -> int:
    if not checkpoint or not Path(checkpoint).is_file():
        raise CLIError(f"checkpoint not found: {checkpoint}")
    params, meta = load_checkpoint(checkpoint)
    if "model" not in meta:
        raise CLIError(f"{checkpoint}: checkpoint carries no model configuration")
    mc = ModelConfig(**meta["model"])
    exp = Experiment(cfg)
    if mc.input_dim != exp.features.shape[1]:
        raise CLIError(
            f"checkpoint expects {mc.input_dim} features, dataset has {exp.features.shape[1]}"
        )
    op, _ = exp.operator(mc)
    trace = forward(exp.features, params, mc, op, "eval")
    lines = []
    for i, row in enumerate(trace.hidden):
        label = exp.graph.class_names[exp.graph.labels[i]]
        lines.append("\t".join([exp.graph.node_ids[i], label, *(repr(float(v)) for v in row)]))
    text = "\n".join(lines) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="published per-dataset settings")
    g.add_argument("--dataset-content")
    g.add_argument("--dataset-cites")
    g.add_argument("--synthetic", type=int, metavar="K", help="use the two-clique graph with K nodes per clique")
    g.add_argument("--mode", help=f"one of {', '.join(MODES)} (comma list for sweeps)")
    g.add_argument("--layers", type=int)
    g.add_argument("--hidden", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--filter-f", type=float)
    g.add_argument("--scale-s", type=float)
    g.add_argument("--threshold-t", type=float)
    g.add_argument("--dropout", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--split", help="standard | rate:<r>")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--out")
    g.add_argument("--wavelet", help="exact | cheby:<order>")
    g.add_argument("--cache-dir", help="directory for cached wavelet bases")
    g.add_argument("--normalize-features", choices=["true", "false"])
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="deepgwc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", parents=[common], help="train once and write epoch + summary records")
    p.add_argument("--checkpoint", help="where to save the best weights (default: <out>.ckpt)")
    p = sub.add_parser("sweep-depth", parents=[common], help="accuracy against depth")
    p.add_argument("--depths", help="comma list, e.g. 2,4,8,16,32,64")
    p = sub.add_parser("sweep-rate", parents=[common], help="accuracy against label rate")
    p.add_argument("--rates", help="comma list of label rates, e.g. 0.005,0.01")
    sub.add_parser("wavelet-stats", parents=[common], help="density and residual of the wavelet basis")
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient verification")
    p.add_argument("--samples", type=int)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p = sub.add_parser("dump-embeddings", parents=[common], help="write final hidden representations")
    p.add_argument("--checkpoint", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep-depth":
            return cmd_sweep_depth(cfg)
        if args.command == "sweep-rate":
            return cmd_sweep_rate(cfg)
        if args.command == "wavelet-stats":
            return cmd_wavelet_stats(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, corrupt=args.corrupt_gradient)
        if args.command == "dump-embeddings":
            return cmd_dump_embeddings(cfg, args.checkpoint)
    except (CLIError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"deepgwc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
