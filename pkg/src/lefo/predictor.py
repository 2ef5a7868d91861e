"""Next-sample predictors: an ARMA baseline and small fully connected networks.

Networks are plain numpy: a list of ``(W, b)`` pairs with ``W`` shaped
(out, in), rectifier on hidden layers and identity on the output layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CacheMismatch,
    InsufficientHistory,
    InvalidDims,
    NonFiniteInput,
    ShapeMismatch,
    ValidationError,
    WrongWindowLength,
)
from .trace_io import N_FEATURES

LEADER_DEPTH = 12
FOLLOWER_DEPTH = 8
HIDDEN_WIDTH = 100
DEFAULT_WINDOW = 4
CHECKPOINT_FORMAT = "lefo-mlp-checkpoint/1"


# --- ARMA ------------------------------------------------------------------


@dataclass(frozen=True)
class ArmaParams:
    omega: tuple = ()
    lam: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if not np.isfinite(self.omega + self.lam).all():
            raise ValidationError("ARMA coefficients must be finite")


def arma_predict(params, history, errors=()):
    """One-step ARMA point forecast.

    ``history`` and ``errors`` are ordered oldest to newest; ``omega[0]``
    weights the most recent value.  Residuals beyond the last observed step
    are zero for point forecasts, so only past residuals enter.
    """
    p, q = len(params.omega), len(params.lam)
    history = np.asarray(history, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if len(history) < p:
        raise InsufficientHistory(f"need {p} past values, got {len(history)}")
    if len(errors) < q:
        raise InsufficientHistory(f"need {q} past residuals, got {len(errors)}")
    ar = sum(params.omega[i] * history[-1 - i] for i in range(p))
    ma = sum(params.lam[j] * errors[-1 - j] for j in range(q))
    return float(ar + ma)


def fit_ar(series, order):
    """Least-squares AR(order) coefficients for a 1-D series (no MA part)."""
    x = np.asarray(series, dtype=np.float64)
    if order < 1 or len(x) <= order:
        raise InsufficientHistory(f"series of length {len(x)} too short for AR({order})")
    # column i holds the value i+1 steps back
    lagged = np.column_stack([x[order - 1 - i : len(x) - 1 - i] for i in range(order)])
    coef, *_ = np.linalg.lstsq(lagged, x[order:], rcond=None)
    return ArmaParams(omega=tuple(coef))


# --- MLP -------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature normalisation used by :func:`predict_next`.

    Window inputs are encoded as the newest sample ``(s - center) / scale``
    followed by the older samples as offsets from the newest divided by
    ``step_scale``.  The network output is the next step increment divided by
    ``step_scale``.
    """

    center: np.ndarray
    scale: np.ndarray
    step_scale: np.ndarray

    def __post_init__(self):
        for name in ("center", "scale", "step_scale"):
            a = np.array(getattr(self, name), dtype=np.float64).reshape(N_FEATURES)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def fit(cls, data):
        data = np.asarray(data, dtype=np.float64)
        scale = data.std(axis=0)
        step = np.diff(data, axis=0).std(axis=0) if len(data) > 2 else np.zeros(N_FEATURES)
        scale[scale < 1e-12] = 1.0
        step[step < 1e-12] = 1.0
        return cls(data.mean(axis=0), scale, step)

    def encode(self, windows):
        """(B, W, 9) raw windows -> (B, 9W) network inputs."""
        last = windows[:, -1, :]
        head = (last - self.center) / self.scale
        tail = (windows[:, :-1, :] - last[:, None, :]) / self.step_scale
        return np.concatenate([head, tail[:, ::-1, :].reshape(len(windows), -1)], axis=1)

    def decode(self, windows, out):
        return windows[:, -1, :] + out * self.step_scale

    def target(self, windows, nxt):
        return (nxt - windows[:, -1, :]) / self.step_scale


@dataclass(frozen=True, eq=False)
class MlpParams:
    weights: tuple
    biases: tuple
    hidden_activation: str = "relu"
    scaler: Optional[FeatureScaler] = None
    seed: Optional[int] = None

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise InvalidDims("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidDims(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != ws[i - 1].shape[0]:
                raise InvalidDims(f"layer {i} input {w.shape[1]} != layer {i - 1} output {ws[i - 1].shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValidationError(f"layer {i} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        if self.hidden_activation not in ("relu", "identity"):
            raise ValidationError(f"unknown activation {self.hidden_activation!r}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layers(self):
        return list(zip(self.weights, self.biases))

    @property
    def depth(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def window(self):
        return self.in_dim // N_FEATURES

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in self.layers)

    def shapes(self):
        return [w.shape for w in self.weights]

    def flat(self):
        """All parameters, layer by layer: W row-major then b."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def with_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {theta.shape}")
        ws, bs, i = [], [], 0
        for w in self.weights:
            o, n = w.shape
            ws.append(theta[i : i + o * n].reshape(o, n))
            i += o * n
            bs.append(theta[i : i + o])
            i += o
        return replace(self, weights=tuple(ws), biases=tuple(bs))

    def bit_equal(self, other):
        return (
            self.shapes() == other.shapes()
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    dropout_rate: float = 0.2
    seed: int = 0
    clip_norm: Optional[float] = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must lie in [0, 1)")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValidationError("batch_size must be a positive integer")
        if not 0 <= self.dropout_rate < 1:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValidationError("clip_norm must be positive or None")


def mlp_init(depth, width, in_dim, out_dim, seed, hidden_activation="relu"):
    """He-initialised network: N(0, 2/fan_in) weights, zero biases.

    ``depth`` counts affine layers, so ``depth == 1`` is a single
    ``in_dim -> out_dim`` map and ``width`` is unused.
    """
    if depth < 1 or min(width, in_dim, out_dim) < 1:
        raise InvalidDims(f"invalid dims depth={depth} width={width} in={in_dim} out={out_dim}")
    rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
    dims = [in_dim] + [width] * (depth - 1) + [out_dim]
    weights = [rng.normal(0.0, np.sqrt(2.0 / n), size=(o, n)) for n, o in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(o) for o in dims[1:]]
    return MlpParams(tuple(weights), tuple(biases), hidden_activation=hidden_activation, seed=int(seed))


def leader_init(seed, window=DEFAULT_WINDOW, depth=LEADER_DEPTH, width=HIDDEN_WIDTH):
    return mlp_init(depth, width, N_FEATURES * window, N_FEATURES, seed)


def follower_init(seed, window=DEFAULT_WINDOW, depth=FOLLOWER_DEPTH, width=HIDDEN_WIDTH):
    return mlp_init(depth, width, N_FEATURES * window, N_FEATURES, seed)


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    pre: list  # pre-activations of each layer
    masks: list  # scaled dropout multipliers per hidden layer, or None
    shapes: list = field(default_factory=list)
    squeeze: bool = False


def dropout_masks(params, rate, rng, batch=None):
    """Inverted-dropout multipliers for each hidden layer (0 or 1/(1-rate))."""
    if rate == 0:
        return [None] * (params.depth - 1)
    out = []
    for w in params.weights[:-1]:
        shape = (w.shape[0],) if batch is None else (batch, w.shape[0])
        keep = rng.random(shape) >= rate
        out.append(keep / (1.0 - rate))
    return out


def mlp_forward(params, x, dropout_mask=None):
    """Forward pass for one input vector or a (B, in) batch.

    ``dropout_mask`` is a per-hidden-layer list of multipliers as produced
    by :func:`dropout_masks` (entries may be None); without it no unit is
    dropped and nothing is rescaled.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.in_dim:
        raise InvalidDims(f"input width {h.shape[1]} != network input {params.in_dim}")
    if not np.isfinite(h).all():
        raise NonFiniteInput("network input contains NaN or Inf")
    n_hidden = params.depth - 1
    if dropout_mask is not None and len(dropout_mask) != n_hidden:
        raise ShapeMismatch(f"expected {n_hidden} dropout masks, got {len(dropout_mask)}")
    relu = params.hidden_activation == "relu"
    inputs, pre, masks = [], [], []
    for i, (w, b) in enumerate(params.layers):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        if i < n_hidden:
            h = np.maximum(z, 0.0) if relu else z
            m = None if dropout_mask is None else dropout_mask[i]
            if m is not None:
                h = h * m
            masks.append(m)
        else:
            h = z
    cache = ForwardCache(inputs, pre, masks, params.shapes(), squeeze)
    return (h[0] if squeeze else h), cache


def mlp_backward(params, cache, output_gradient):
    """Reverse-mode gradients; returns a list of ``(dW, db)`` per layer.

    Batch gradients are summed over the batch axis.
    """
    if cache.shapes != params.shapes() or len(cache.pre) != params.depth:
        raise CacheMismatch("forward cache was produced by a network of a different shape")
    g = np.asarray(output_gradient, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ShapeMismatch(f"output gradient {g.shape} != network output {cache.pre[-1].shape}")
    relu = params.hidden_activation == "relu"
    grads = [None] * params.depth
    for i in range(params.depth - 1, -1, -1):
        grads[i] = (g.T @ cache.inputs[i], g.sum(axis=0))
        if i == 0:
            break
        g = g @ params.weights[i]
        m = cache.masks[i - 1]
        if m is not None:
            g = g * m
        if relu:
            g = g * (cache.pre[i - 1] > 0)
    return grads


def zero_velocity(params):
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]


def sgd_step(params, gradients, velocity, cfg):
    """Momentum SGD: ``v <- momentum * v - lr * g``; ``theta <- theta + v``."""
    if len(gradients) != params.depth or len(velocity) != params.depth:
        raise ShapeMismatch("gradient/velocity layer count does not match the network")
    new_w, new_b, new_v = [], [], []
    for (w, b), (gw, gb), (vw, vb) in zip(params.layers, gradients, velocity):
        if gw.shape != w.shape or gb.shape != b.shape or vw.shape != w.shape or vb.shape != b.shape:
            raise ShapeMismatch(f"layer shape {w.shape} does not match gradient {gw.shape}")
        vw = cfg.momentum * vw - cfg.learning_rate * gw
        vb = cfg.momentum * vb - cfg.learning_rate * gb
        new_w.append(w + vw)
        new_b.append(b + vb)
        new_v.append((vw, vb))
    return replace(params, weights=tuple(new_w), biases=tuple(new_b)), new_v


def mse_value_and_grads(params, x, y, dropout_mask=None):
    """Mean squared error over all outputs of a batch, with layer gradients."""
    out, cache = mlp_forward(params, x, dropout_mask)
    diff = out - y
    loss = float(np.mean(diff * diff))
    grads = mlp_backward(params, cache, 2.0 * diff / diff.size)
    return loss, grads


def clip_gradients(grads, max_norm):
    """Rescale all layer gradients together so their global L2 norm <= max_norm."""
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(gw * gw) + np.sum(gb * gb)) for gw, gb in grads))
    if norm <= max_norm:
        return grads
    f = max_norm / norm
    return [(gw * f, gb * f) for gw, gb in grads]


def flat_grads(grads):
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


# --- windowing ---------------------------------------------------------------


def make_windows(data, window):
    """All (window, next) pairs from a (N, 9) array: (M, W, 9) and (M, 9)."""
    data = np.asarray(data, dtype=np.float64)
    m = len(data) - window
    if m < 1:
        raise WrongWindowLength(f"need more than {window} samples, got {len(data)}")
    idx = np.arange(window)[None, :] + np.arange(m)[:, None]
    return data[idx], data[window:]


def training_pairs(params, data):
    """Encoded network inputs and targets for every window in ``data``."""
    windows, nxt = make_windows(data, params.window)
    if params.scaler is None:
        return windows.reshape(len(windows), -1), nxt
    return params.scaler.encode(windows), params.scaler.target(windows, nxt)


def _as_window(window):
    if hasattr(window, "data") and hasattr(window, "t"):
        return np.asarray(window.data)
    rows = [s.features if hasattr(s, "features") else s for s in window]
    return np.asarray(rows, dtype=np.float64)


def predict_next(params, window):
    """Predict the sample following ``window`` (oldest first), inference mode.

    ``window`` may be a sequence of HapticSample, a (W, 9) array, or a Trace.
    Without a scaler the network maps the flattened window directly to the
    output; with one, the output is an increment added to the newest sample.
    """
    w = _as_window(window)
    if w.ndim != 2 or w.shape[1] != N_FEATURES or w.shape[0] * N_FEATURES != params.in_dim:
        raise WrongWindowLength(f"network expects a window of {params.window} samples, got {w.shape[0]}")
    return predict_batch(params, w[None])[0]


def predict_batch(params, windows):
    """Vectorised :func:`predict_next` over (B, W, 9) windows."""
    windows = np.asarray(windows, dtype=np.float64)
    if params.scaler is None:
        out, _ = mlp_forward(params, windows.reshape(len(windows), -1))
        return out
    out, _ = mlp_forward(params, params.scaler.encode(windows))
    return params.scaler.decode(windows, out)


# --- checkpoints -------------------------------------------------------------


def params_to_dict(params, sgd=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "layer_dims": [list(w.shape) for w in params.weights],
        "hidden_activation": params.hidden_activation,
        "seed": params.seed,
        "params": params.flat().tolist(),
        "sgd": asdict(sgd) if sgd is not None else None,
        "scaler": None,
    }
    if params.scaler is not None:
        doc["scaler"] = {k: getattr(params.scaler, k).tolist() for k in ("center", "scale", "step_scale")}
    return doc


def params_from_dict(doc):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not a {CHECKPOINT_FORMAT} document")
    dims = [tuple(d) for d in doc["layer_dims"]]
    theta = np.asarray(doc["params"], dtype=np.float64)
    template = MlpParams(
        tuple(np.zeros(d) for d in dims),
        tuple(np.zeros(d[0]) for d in dims),
        hidden_activation=doc.get("hidden_activation", "relu"),
        scaler=FeatureScaler(**doc["scaler"]) if doc.get("scaler") else None,
        seed=doc.get("seed"),
    )
    sgd = SgdConfig(**doc["sgd"]) if doc.get("sgd") else None
    return template.with_flat(theta), sgd


def save_checkpoint(params, path, sgd=None):
    """JSON checkpoint; floats are written with repr so reading back is bit-exact."""
    path = Path(path)
    path.write_text(json.dumps(params_to_dict(params, sgd)))
    return path


def load_checkpoint(path):
    return params_from_dict(json.loads(Path(path).read_text()))
