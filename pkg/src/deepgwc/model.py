"""The deep graph wavelet convolutional network.

Layer ``l`` computes::

    H_mix = (1 - alpha) P' H + alpha H0
    W'    = beta_l W_l + (1 - beta_l) I
    H     = relu(H_mix @ W')

between a linear input projection (features -> hidden) and a linear output
projection (hidden -> classes) followed by log-softmax.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .linalg import ShapeError
from .propagation import PropagationOperator

__all__ = [
    "MODES",
    "ModelConfig",
    "ModelParameters",
    "ForwardTrace",
    "beta_schedule",
    "layer_beta",
    "layer_forward",
    "forward",
    "log_softmax",
    "reduction_mode",
    "with_mode",
    "init_parameters",
    "save_checkpoint",
    "load_checkpoint",
]

MODES = ("gcn", "gwnn", "appnp-like", "gcnii-like", "deepgwc")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and wavelet hyperparameters.

    ``beta_override`` pins every ``beta_l`` to 0 or 1 instead of deriving it
    from ``eta``; the GCN and GWNN reductions need ``beta = 1``, which the
    logarithmic schedule never reaches.
    """

    input_dim: int
    classes: int
    layers: int = 64
    hidden: int = 64
    alpha: float = 0.1
    eta: float = 0.5
    gamma: float = 0.4
    filter_f: float = 0.4
    scale_s: float = 1.0
    threshold_t: float = 1e-4
    dropout: float = 0.6
    beta_override: float | None = None

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one convolution layer")
        if self.hidden < 1 or self.input_dim < 1 or self.classes < 1:
            raise ValueError("dimensions must be positive")
        for name in ("alpha", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.beta_override not in (None, 0.0, 1.0):
            raise ValueError("beta_override must be None, 0 or 1")
        if self.filter_f <= 0 or self.scale_s <= 0 or self.threshold_t < 0:
            raise ValueError("filter_f and scale_s must be positive, threshold_t non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def beta_schedule(eta: float, l: int) -> float:
    """``ln(1 + eta / l)`` for layer ``l >= 1``."""
    if l < 1:
        raise ValueError(f"layer index must be >= 1, got {l}")
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    return math.log1p(eta / l)


def layer_beta(config: ModelConfig, l: int) -> float:
    if config.beta_override is not None:
        return float(config.beta_override)
    return beta_schedule(config.eta, l)


def reduction_mode(config: ModelConfig) -> str:
    """Name the classical model a configuration collapses to, else ``"deepgwc"``."""
    a, g, bo = config.alpha, config.gamma, config.beta_override
    beta_one = bo == 1.0
    beta_zero = bo == 0.0 or (bo is None and config.eta == 0)
    if a == 0 and beta_one and g == 0:
        return "gcn"
    if a == 0 and beta_one and g == 1:
        return "gwnn"
    if a != 0 and g == 0:
        return "appnp-like" if beta_zero else "gcnii-like"
    return "deepgwc"


def with_mode(config: ModelConfig, mode: str) -> ModelConfig:
    """Force the hyperparameters that define ``mode``; other fields are kept.

    The residual modes keep the configured ``alpha`` (0.1 is used if it is 0).
    """
    alpha = config.alpha if config.alpha > 0 else 0.1
    if mode == "gcn":
        return replace(config, alpha=0.0, gamma=0.0, beta_override=1.0)
    if mode == "gwnn":
        return replace(config, alpha=0.0, gamma=1.0, beta_override=1.0)
    if mode == "appnp-like":
        return replace(config, alpha=alpha, gamma=0.0, beta_override=0.0)
    if mode == "gcnii-like":
        eta = config.eta if config.eta > 0 else 0.5
        return replace(config, alpha=alpha, gamma=0.0, eta=eta, beta_override=None)
    if mode == "deepgwc":
        return config
    raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


@dataclass
class ModelParameters:
    input_weights: np.ndarray  # p x d
    layer_weights: list  # L arrays, d x d
    output_weights: np.ndarray  # d x C

    def tensors(self) -> list[np.ndarray]:
        return [self.input_weights, *self.layer_weights, self.output_weights]

    def names(self) -> list[str]:
        return ["input"] + [f"layer{l}" for l in range(1, len(self.layer_weights) + 1)] + ["output"]

    @classmethod
    def from_tensors(cls, tensors) -> "ModelParameters":
        tensors = list(tensors)
        return cls(tensors[0], tensors[1:-1], tensors[-1])

    def zeros_like(self) -> "ModelParameters":
        return ModelParameters.from_tensors(np.zeros_like(t) for t in self.tensors())

    def copy(self) -> "ModelParameters":
        return ModelParameters.from_tensors(t.copy() for t in self.tensors())

    def check_shapes(self, config: ModelConfig):
        p, d, c = config.input_dim, config.hidden, config.classes
        if self.input_weights.shape != (p, d):
            raise ShapeError("input weights", self.input_weights.shape, (p, d))
        if len(self.layer_weights) != config.layers:
            raise ValueError(f"expected {config.layers} layer weights, got {len(self.layer_weights)}")
        for w in self.layer_weights:
            if w.shape != (d, d):
                raise ShapeError("layer weights", w.shape, (d, d))
        if self.output_weights.shape != (d, c):
            raise ShapeError("output weights", self.output_weights.shape, (d, c))


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_parameters(config: ModelConfig, seed: int = 0) -> ModelParameters:
    rng = np.random.default_rng(seed)
    d = config.hidden
    return ModelParameters(
        _glorot(rng, config.input_dim, d),
        [_glorot(rng, d, d) for _ in range(config.layers)],
        _glorot(rng, d, config.classes),
    )


@dataclass
class ForwardTrace:
    """Activations kept for the backward pass.

    ``mixed[l]`` is the propagated-plus-residual input of layer ``l + 1`` and
    ``pre[l]`` its pre-activation; ``masks`` maps ``"input"`` and
    ``"layer<l>"`` to scaled dropout masks (train mode only).
    """

    features: np.ndarray
    input_pre: np.ndarray
    h0: np.ndarray
    mixed: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    hidden: np.ndarray | None = None
    logits: np.ndarray | None = None
    log_probs: np.ndarray | None = None
    masks: dict = field(default_factory=dict)
    mode: str = "eval"

    def post(self, l: int) -> np.ndarray:
        """Output ``H^l`` of layer ``l`` (1-based)."""
        return np.maximum(self.pre[l - 1], 0.0)


def log_softmax(y: np.ndarray) -> np.ndarray:
    shifted = y - y.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _mix_and_transform(h, h0, op, w, alpha, beta):
    mixed = (1.0 - alpha) * op.apply(h) + alpha * h0 if alpha < 1 else h0.copy()
    w_eff = beta * w
    w_eff[np.diag_indices_from(w_eff)] += 1.0 - beta
    return mixed, mixed @ w_eff


def layer_forward(h, h0, op: PropagationOperator, w, alpha: float, beta: float) -> np.ndarray:
    """``relu(((1 - alpha) P' h + alpha h0) @ (beta w + (1 - beta) I))``."""
    if h.shape != h0.shape:
        raise ShapeError("layer input vs initial representation", h.shape, h0.shape)
    if w.shape != (h.shape[1], h.shape[1]):
        raise ShapeError("layer weights", w.shape, (h.shape[1], h.shape[1]))
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ValueError("alpha and beta must lie in [0, 1]")
    _, pre = _mix_and_transform(h, h0, op, w, alpha, beta)
    return np.maximum(pre, 0.0)


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(
    features: np.ndarray,
    params: ModelParameters,
    config: ModelConfig,
    op: PropagationOperator,
    mode: str = "eval",
    seed=None,
) -> ForwardTrace:
    """Full network pass.

    Dropout (train mode only) is applied to the projected input ``H0`` and to
    the input of every layer after the first; masks are drawn from
    ``numpy.random.default_rng(seed)`` in that order.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if features.ndim != 2 or features.shape[1] != config.input_dim:
        raise ShapeError("features", features.shape, (features.shape[0], config.input_dim))
    if op.n != features.shape[0]:
        raise ShapeError("propagation operator vs features", op.matrix.shape, features.shape)
    params.check_shapes(config)

    drop = mode == "train" and config.dropout > 0
    rng = np.random.default_rng(seed) if drop else None

    input_pre = features @ params.input_weights
    h0 = np.maximum(input_pre, 0.0)
    trace = ForwardTrace(features, input_pre, h0, mode=mode)
    if drop:
        m = _dropout_mask(rng, h0.shape, config.dropout)
        trace.masks["input"] = m
        h0 = h0 * m
        trace.h0 = h0

    h = h0
    for l, w in enumerate(params.layer_weights, start=1):
        if drop and l > 1:
            m = _dropout_mask(rng, h.shape, config.dropout)
            trace.masks[f"layer{l}"] = m
            h = h * m
        mixed, pre = _mix_and_transform(h, h0, op, w, config.alpha, layer_beta(config, l))
        if not np.all(np.isfinite(pre)):
            raise FloatingPointError(f"non-finite activations in layer {l}")
        trace.mixed.append(mixed)
        trace.pre.append(pre)
        h = np.maximum(pre, 0.0)

    trace.hidden = h
    trace.logits = h @ params.output_weights
    if not np.all(np.isfinite(trace.logits)):
        raise FloatingPointError("non-finite activations in the output layer")
    trace.log_probs = log_softmax(trace.logits)
    return trace


# --- checkpoints ------------------------------------------------------------
#
# layout (little endian):
#   8s   magic b"DGWCCKPT"
#   u32  format version, u32 tensor count
#   u64  length of the UTF-8 JSON metadata, then the metadata bytes
#   per tensor: u64 rows, u64 cols, f64[rows * cols] row-major values

CKPT_MAGIC = b"DGWCCKPT"
CKPT_VERSION = 1


def save_checkpoint(path, params: ModelParameters, meta: dict | None = None) -> None:
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    tensors = params.tensors()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(tensors)))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in tensors:
            fh.write(struct.pack("<QQ", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> tuple[ModelParameters, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    try:
        version, count = struct.unpack_from("<II", raw, 8)
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (mlen,) = struct.unpack_from("<Q", raw, 16)
        pos = 24
        meta = json.loads(raw[pos : pos + mlen])
    except (struct.error, json.JSONDecodeError):
        raise ValueError(f"{path}: truncated or corrupt checkpoint header") from None
    pos += mlen
    tensors = []
    for _ in range(count):
        if pos + 16 > len(raw):
            raise ValueError(f"{path}: truncated checkpoint")
        rows, cols = struct.unpack_from("<QQ", raw, pos)
        pos += 16
        size = rows * cols * 8
        if pos + size > len(raw):
            raise ValueError(f"{path}: truncated checkpoint")
        tensors.append(np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).copy())
        pos += size
    return ModelParameters.from_tensors(tensors), meta
