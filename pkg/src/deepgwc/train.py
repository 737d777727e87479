"""Loss, reverse-mode gradients, Adam, gradient checking and the training loop."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DatasetSplit
from .model import (
    ForwardTrace,
    ModelConfig,
    ModelParameters,
    forward,
    init_parameters,
    layer_beta,
    reduction_mode,
)
from .propagation import PropagationOperator

__all__ = [
    "OptimizerState",
    "TrainSchedule",
    "TrainReport",
    "nll_loss",
    "accuracy",
    "predict",
    "backward",
    "adam_init",
    "adam_step",
    "finite_difference_check",
    "epoch_seed",
    "train",
]


def _mask_index(mask) -> np.ndarray:
    idx = np.asarray(mask)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("node mask is empty")
    return idx.astype(np.int64)


def nll_loss(log_probs: np.ndarray, labels, mask) -> float:
    """Mean of ``-log_probs[i, labels[i]]`` over the nodes in ``mask``."""
    idx = _mask_index(mask)
    labels = np.asarray(labels)
    return float(-log_probs[idx, labels[idx]].mean())


def predict(log_probs: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(log_probs, axis=1)


def accuracy(log_probs: np.ndarray, labels, mask) -> float:
    idx = _mask_index(mask)
    return float(np.count_nonzero(predict(log_probs)[idx] == np.asarray(labels)[idx]) / idx.size)


def backward(
    trace: ForwardTrace,
    labels,
    mask,
    params: ModelParameters,
    config: ModelConfig,
    op: PropagationOperator,
) -> ModelParameters:
    """Gradients of :func:`nll_loss` with respect to every weight matrix.

    Dropout masks and ReLU gates are replayed from ``trace``.
    """
    params.check_shapes(config)
    if len(trace.pre) != config.layers:
        raise ValueError(f"trace has {len(trace.pre)} layers, config expects {config.layers}")
    idx = _mask_index(mask)
    labels = np.asarray(labels)

    probs = np.exp(trace.log_probs[idx])
    probs[np.arange(idx.size), labels[idx]] -= 1.0
    d_logits = np.zeros_like(trace.logits)
    d_logits[idx] = probs / idx.size

    grads = params.zeros_like()
    grads.output_weights = trace.hidden.T @ d_logits
    dh = d_logits @ params.output_weights.T

    alpha = config.alpha
    d = config.hidden
    dh0 = np.zeros_like(trace.h0)
    for l in range(config.layers, 0, -1):
        beta = layer_beta(config, l)
        dpre = dh * (trace.pre[l - 1] > 0)
        grads.layer_weights[l - 1] = beta * (trace.mixed[l - 1].T @ dpre)
        w_eff = beta * params.layer_weights[l - 1]
        w_eff[np.diag_indices(d)] += 1.0 - beta
        dmixed = dpre @ w_eff.T
        if alpha > 0:
            dh0 += alpha * dmixed
        if alpha < 1:
            dh = (1.0 - alpha) * op.apply_transpose(dmixed)
        else:
            dh = np.zeros_like(dmixed)
        mask_l = trace.masks.get(f"layer{l}")
        if mask_l is not None:
            dh = dh * mask_l
    dh0 += dh  # the first layer reads H0 directly

    if "input" in trace.masks:
        dh0 = dh0 * trace.masks["input"]
    d_input_pre = dh0 * (trace.input_pre > 0)
    grads.input_weights = trace.features.T @ d_input_pre
    return grads


# --- Adam -------------------------------------------------------------------


@dataclass
class OptimizerState:
    first: list
    second: list
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 5e-4
    step: int = 0


def adam_init(params: ModelParameters, learning_rate=0.001, weight_decay=5e-4, **kw) -> OptimizerState:
    zeros = [np.zeros_like(t) for t in params.tensors()]
    return OptimizerState(
        zeros, [z.copy() for z in zeros], learning_rate=learning_rate, weight_decay=weight_decay, **kw
    )


def adam_step(
    state: OptimizerState, params: ModelParameters, grads: ModelParameters
) -> tuple[ModelParameters, OptimizerState]:
    """One bias-corrected Adam update; weight decay enters as ``+ wd * w`` in the gradient."""
    names = params.names()
    ws, gs = params.tensors(), grads.tensors()
    if len(ws) != len(gs) or len(ws) != len(state.first):
        raise ValueError("parameter, gradient and optimizer state layouts differ")
    for name, w, g in zip(names, ws, gs):
        if w.shape != g.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, weights {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in zip(ws, gs, state.first, state.second):
        if state.weight_decay:
            g = g + state.weight_decay * w
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_w.append(w - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    return ModelParameters.from_tensors(new_w), replace(state, first=new_m, second=new_v, step=step)


# --- gradient check ---------------------------------------------------------


def _gates(trace: ForwardTrace):
    return [trace.input_pre > 0] + [p > 0 for p in trace.pre]


def finite_difference_check(
    features,
    labels,
    mask,
    params: ModelParameters,
    config: ModelConfig,
    op: PropagationOperator,
    samples: int = 50,
    h: float = 1e-5,
    seed: int = 0,
    mode: str = "train",
    grads: ModelParameters | None = None,
    floor: float = 1e-6,
) -> dict:
    """Compare analytic gradients with central differences on sampled weights.

    Coordinates whose ``+-h`` perturbation flips a ReLU gate are skipped and
    replaced by fresh samples; a central difference across a kink does not
    estimate the derivative.  Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps the ~1e-11 roundoff
    of the difference quotient from dominating vanishing gradients.  Pass
    ``grads`` to check a gradient other than the one :func:`backward`
    produces.
    """
    fwd_seed = seed + 1
    trace = forward(features, params, config, op, mode, seed=fwd_seed)
    if grads is None:
        grads = backward(trace, labels, mask, params, config, op)
    rng = np.random.default_rng(seed)
    tensors = params.tensors()
    gtensors = grads.tensors()
    names = params.names()
    sizes = np.array([t.size for t in tensors])

    def loss_at(ws):
        tr = forward(features, ModelParameters.from_tensors(ws), config, op, mode, seed=fwd_seed)
        return nll_loss(tr.log_probs, labels, mask), tr

    worst = 0.0
    checked = []
    skipped = 0
    attempts = 0
    while len(checked) < samples and attempts < 20 * samples:
        attempts += 1
        k = int(rng.choice(len(tensors), p=sizes / sizes.sum()))
        flat = int(rng.integers(tensors[k].size))
        pos = np.unravel_index(flat, tensors[k].shape)
        plus = [t.copy() for t in tensors]
        minus = [t.copy() for t in tensors]
        plus[k][pos] += h
        minus[k][pos] -= h
        lp, tp = loss_at(plus)
        lm, tm = loss_at(minus)
        if any(np.any(a != b) for a, b in zip(_gates(tp), _gates(tm))):
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * h)
        analytic = float(gtensors[k][pos])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, rel)
        checked.append((names[k], tuple(int(i) for i in pos), analytic, numeric, rel))
    return {
        "max_rel_error": worst,
        "checked": len(checked),
        "skipped_kinks": skipped,
        "mode": reduction_mode(config),
        "details": checked,
    }


# --- training loop ----------------------------------------------------------


@dataclass(frozen=True)
class TrainSchedule:
    max_epochs: int = 1500
    patience: int = 100
    learning_rate: float = 0.001
    weight_decay: float = 5e-4


def epoch_seed(seed: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch])


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_validation_accuracy: float = 0.0
    test_accuracy: float = 0.0
    wall_time: float = 0.0
    mode: str = "deepgwc"
    weight_decay: float = 0.0
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    params: ModelParameters | None = field(default=None, repr=False)

    def summary(self) -> dict:
        """Final record; deterministic for a fixed seed (wall time is excluded)."""
        return {
            "type": "summary",
            "test_accuracy": self.test_accuracy,
            "best_epoch": self.best_epoch,
            "best_validation_accuracy": self.best_validation_accuracy,
            "epochs_run": len(self.epochs),
            "mode": self.mode,
            "weight_decay": self.weight_decay,
            "config": self.config,
            **self.extra,
        }

    def records(self) -> list[dict]:
        return [{"type": "epoch", **e} for e in self.epochs] + [self.summary()]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def train(
    features: np.ndarray,
    labels,
    split: DatasetSplit,
    config: ModelConfig,
    op: PropagationOperator,
    schedule: TrainSchedule = TrainSchedule(),
    seed: int = 0,
    log=None,
) -> TrainReport:
    """Adam on the training nodes with early stopping on validation accuracy.

    Returns the report with the parameters of the best-validation epoch
    (first occurrence on ties); training stops once validation accuracy has
    not improved for ``schedule.patience`` epochs.
    """
    labels = np.asarray(labels)
    for a, b in (("train", "validation"), ("train", "test"), ("validation", "test")):
        if np.intersect1d(getattr(split, a), getattr(split, b)).size:
            raise ValueError(f"{a} and {b} node sets overlap")
    start = time.perf_counter()
    params = init_parameters(config, seed)
    state = adam_init(params, schedule.learning_rate, schedule.weight_decay)
    report = TrainReport(
        mode=reduction_mode(config),
        weight_decay=schedule.weight_decay,
        config={**config.to_dict(), "max_epochs": schedule.max_epochs, "patience": schedule.patience,
                "learning_rate": schedule.learning_rate, "seed": seed},
    )
    best_val = -1.0
    best_params = params
    since_best = 0
    for epoch in range(1, schedule.max_epochs + 1):
        trace = forward(features, params, config, op, "train", seed=epoch_seed(seed, epoch))
        loss = nll_loss(trace.log_probs, labels, split.train)
        grads = backward(trace, labels, split.train, params, config, op)
        params, state = adam_step(state, params, grads)

        z = forward(features, params, config, op, "eval").log_probs
        val_acc = accuracy(z, labels, split.validation)
        test_acc = accuracy(z, labels, split.test)
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": loss,
                "validation_loss": nll_loss(z, labels, split.validation),
                "validation_accuracy": val_acc,
                "test_accuracy": test_acc,
            }
        )
        if log is not None:
            log(report.epochs[-1])
        if val_acc > best_val:
            best_val = val_acc
            best_params = params
            report.best_epoch = epoch
            report.best_validation_accuracy = val_acc
            report.test_accuracy = test_acc
            since_best = 0
        else:
            since_best += 1
            if since_best >= schedule.patience:
                break
    report.params = best_params
    report.wall_time = time.perf_counter() - start
    return report
