"""Fully connected ReLU classifier with hand-written backprop and Adam.

Parameters are plain numpy arrays. A network with ``hidden=()`` degenerates to
multinomial logistic regression, which the tests use as a closed-form oracle.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, make_rng

__all__ = [
    "ModelParams",
    "TrainConfig",
    "AdamState",
    "History",
    "Evaluation",
    "init_params",
    "logits",
    "forward",
    "loss",
    "per_sample_loss",
    "grad_params",
    "grad_input",
    "activation_pattern",
    "adam_init",
    "adam_step",
    "train",
    "evaluate",
    "save_params",
    "load_params",
]

CHECKPOINT_FORMAT = "tabrobust-mlp"
CHECKPOINT_VERSION = 1

# independent PRNG streams derived from TrainConfig.seed
STREAM_INIT, STREAM_SHUFFLE, STREAM_AUGMENT = 0, 1, 2


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.activations:
            self.activations = ["relu"] * (len(self.weights) - 1) + ["softmax"]
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input width {w.shape[0]} breaks the chain")

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.d_in] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view used by the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays, activations=()) -> "ModelParams":
        return cls(list(arrays[0::2]), list(arrays[1::2]), list(activations))

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                           list(self.activations))


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    hidden: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"loss": list(self.loss), "accuracy": list(self.accuracy)}


@dataclass
class Evaluation:
    accuracy: float
    predictions: np.ndarray
    scores: np.ndarray  # probability of the positive class
    probs: np.ndarray


def init_params(d_in: int, n_classes: int, seed: int = 0, hidden=(64, 32)) -> ModelParams:
    """Glorot-uniform weights, limit sqrt(6 / (fan_in + fan_out)); zero biases."""
    if d_in < 1 or n_classes < 2 or any(h < 1 for h in hidden):
        raise ValueError(f"invalid architecture d_in={d_in}, hidden={hidden}, classes={n_classes}")
    rng = make_rng(seed, STREAM_INIT)
    sizes = [d_in, *hidden, n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _check_input(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.d_in or x.ndim not in (1, 2):
        raise ValueError(f"expected input with {params.d_in} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def _check_labels(params: ModelParams, x: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != x.shape[:-1]:
        raise ValueError(f"labels shape {y.shape} does not match inputs {x.shape}")
    if y.size and (y.min() < 0 or y.max() >= params.n_classes):
        raise ValueError("label outside [0, n_classes)")
    return y


def _forward_cache(params: ModelParams, x: np.ndarray):
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, pre


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1)
    return m + np.log(np.exp(z - m[..., None]).sum(axis=-1))


def logits(params: ModelParams, x) -> np.ndarray:
    x = _check_input(params, x)
    return _forward_cache(params, x)[0]


def forward(params: ModelParams, x) -> np.ndarray:
    """Class probabilities, one row per sample (a vector for a single input)."""
    return _softmax(logits(params, x))


def per_sample_loss(params: ModelParams, x, y) -> np.ndarray:
    x = _check_input(params, x)
    y = _check_labels(params, x, y)
    z = _forward_cache(params, np.atleast_2d(x))[0]
    y2 = np.atleast_1d(y)
    out = _logsumexp(z) - z[np.arange(len(y2)), y2]
    return out if x.ndim == 2 else out[0]


def loss(params: ModelParams, x, y) -> float:
    """Mean cross-entropy."""
    return float(np.mean(per_sample_loss(params, x, y)))


def _backward(params: ModelParams, x: np.ndarray, y: np.ndarray, scale: float, want_params: bool):
    z, pre = _forward_cache(params, x)
    delta = _softmax(z)
    delta[np.arange(len(y)), y] -= 1.0
    if scale != 1.0:
        delta *= scale
    gw, gb = [], []
    for i in range(len(params.weights) - 1, -1, -1):
        if want_params:
            h = x if i == 0 else np.maximum(pre[i - 1], 0.0)
            gw.append(h.T @ delta)
            gb.append(delta.sum(axis=0))
        delta = delta @ params.weights[i].T
        if i > 0:
            delta *= pre[i - 1] > 0  # relu'(0) := 0
    return gw[::-1], gb[::-1], delta


def activation_pattern(params: ModelParams, x) -> np.ndarray:
    """Flattened on/off state of every hidden ReLU; changes exactly when a kink is crossed."""
    _, pre = _forward_cache(params, np.atleast_2d(_check_input(params, x)))
    if not pre:
        return np.zeros(0, dtype=bool)
    return np.concatenate([z.ravel() > 0 for z in pre])


def grad_params(params: ModelParams, x, y) -> ModelParams:
    """Gradient of the mean cross-entropy, shaped like ``params``."""
    x = _check_input(params, x)
    y = _check_labels(params, x, y)
    if x.ndim == 1:
        x, y = x[None], y.reshape(1)
    gw, gb, _ = _backward(params, x, y, 1.0 / len(y), True)
    return ModelParams(gw, gb, list(params.activations))


def grad_input(params: ModelParams, x, y) -> np.ndarray:
    """Per-sample gradient of each sample's own loss with respect to its input."""
    x = _check_input(params, x)
    y = _check_labels(params, x, y)
    if x.ndim == 1:
        return _backward(params, x[None], y.reshape(1), 1.0, False)[2][0]
    return _backward(params, x, y, 1.0, False)[2]


def adam_init(params: ModelParams) -> AdamState:
    arrs = params.arrays()
    return AdamState([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs], 0)


def adam_step(state: AdamState, params: ModelParams, grads: ModelParams, config: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or len(state.m) != len(p_arr):
        raise ValueError("parameter, gradient and optimizer state layouts differ")
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    bc1, bc2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1 if bc1 else m
        v_hat = v / bc2 if bc2 else v
        new_p.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps_adam))
        new_m.append(m)
        new_v.append(v)
    return ModelParams.from_arrays(new_p, params.activations), AdamState(new_m, new_v, t)


def train(data: Dataset, config: TrainConfig, batch_hook=None):
    """Minibatch Adam on mean cross-entropy.

    ``batch_hook(params, xb, yb, rng)`` may return a replacement ``(xb, yb)``
    for each batch before the gradient step; ``rng`` is a dedicated stream so
    that a hook which draws nothing leaves training bit-identical.
    """
    if data.n == 0:
        raise ValueError("cannot train on an empty dataset")
    params = init_params(data.d, max(data.n_classes, 2), config.seed, config.hidden)
    state = adam_init(params)
    shuffle_rng = make_rng(config.seed, STREAM_SHUFFLE)
    hook_rng = make_rng(config.seed, STREAM_AUGMENT)
    hist = History()
    bs = config.batch_size
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(data.n)
        total, count = 0.0, 0
        for start in range(0, data.n, bs):
            idx = order[start:start + bs]
            xb, yb = data.x[idx], data.y[idx]
            if batch_hook is not None:
                xb, yb = batch_hook(params, xb, yb, hook_rng)
            total += loss(params, xb, yb) * len(yb)
            count += len(yb)
            params, state = adam_step(state, params, grad_params(params, xb, yb), config)
        hist.loss.append(total / count)
        hist.accuracy.append(evaluate(params, data).accuracy)
    return params, hist


def evaluate(params: ModelParams, data: Dataset, positive_class: int = 1) -> Evaluation:
    return evaluate_arrays(params, data.x, data.y, positive_class)


def evaluate_arrays(params: ModelParams, x, y, positive_class: int = 1) -> Evaluation:
    x = _check_input(params, x)
    y = _check_labels(params, x, y)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = forward(params, x)
    pred = probs.argmax(axis=1)
    return Evaluation(float(np.mean(pred == y)), pred, probs[:, positive_class], probs)


def save_params(params: ModelParams, path) -> None:
    """JSON checkpoint; weights are row-major (fan_in x fan_out) at full precision."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": params.sizes,
        "layers": [
            {"shape": list(w.shape), "activation": act, "weight": w.ravel().tolist(), "bias": b.tolist()}
            for w, b, act in zip(params.weights, params.biases, params.activations)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_params(path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    ws, bs, acts = [], [], []
    for layer in doc["layers"]:
        ws.append(np.array(layer["weight"], dtype=np.float64).reshape(layer["shape"]))
        bs.append(np.array(layer["bias"], dtype=np.float64))
        acts.append(layer["activation"])
    return ModelParams(ws, bs, acts)
