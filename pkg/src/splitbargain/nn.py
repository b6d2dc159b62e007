"""Dense ReLU networks that can be cut into a device half and a server half.

Weights are stored input-major (``W.shape == (in, out)``) so a layer is
``x @ W + b``. Every hidden layer is a dense+ReLU block; the final layer of
a full model is a dense softmax classifier and always belongs to the server.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_HIDDEN_WIDTHS",
    "LayerSpec",
    "ModelParams",
    "SplitModel",
    "ActivationBatch",
    "AdamState",
    "build_model",
    "split_at",
    "merge",
    "forward_device",
    "forward_server",
    "backward_server",
    "backward_device",
    "model_gradients",
    "split_gradients",
    "adam_step",
    "fedavg",
    "fedavg_adam",
    "train_step_monolithic",
    "train_step_split",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]

# 11 blocks C0..C10 for 784-pixel inputs and 10 classes: 287955 parameters in
# total, 117135 of them in C0..C3.
DEFAULT_HIDDEN_WIDTHS = (47, 192, 192, 176, 161, 146, 146, 146, 146, 146, 209)


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "relu" or "softmax"
    in_width: int
    out_width: int

    @property
    def param_count(self) -> int:
        return self.in_width * self.out_width + self.out_width


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    has_output: bool = True

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases differ in length")
        for i in range(1, len(self.weights)):
            if self.weights[i - 1].shape[1] != self.weights[i].shape[0]:
                raise ValueError(f"layer {i} input width does not chain")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def layers(self) -> list[LayerSpec]:
        out = []
        for i, w in enumerate(self.weights):
            kind = "softmax" if self.has_output and i == self.n_layers - 1 else "relu"
            out.append(LayerSpec(kind, w.shape[0], w.shape[1]))
        return out

    @property
    def layer_param_counts(self) -> list[int]:
        return [int(w.size + b.size) for w, b in zip(self.weights, self.biases)]

    @property
    def total_params(self) -> int:
        return sum(self.layer_param_counts)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                           self.has_output)

    def same_shapes(self, other: "ModelParams") -> bool:
        return (self.n_layers == other.n_layers and self.has_output == other.has_output
                and all(a.shape == b.shape for a, b in zip(self.arrays(), other.arrays())))


@dataclass
class SplitModel:
    device_part: ModelParams
    server_part: ModelParams
    cut_index: int

    @property
    def device_param_count(self) -> int:
        return self.device_part.total_params

    @property
    def server_param_count(self) -> int:
        return self.server_part.total_params


@dataclass
class ActivationBatch:
    """Cut-layer activations with the labels a device uploads alongside them."""

    activations: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != self.activations.shape[0]:
            raise ValueError("activation rows and labels differ in count")

    @property
    def payload_bits(self) -> int:
        n_label_bits = 0 if self.labels is None else 8 * len(self.labels)
        return 32 * self.activations.size + n_label_bits


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()])

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t)


@dataclass
class _Cache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    probs: np.ndarray | None = None
    labels: np.ndarray | None = None


def build_model(input_width: int = 784, hidden_widths: Sequence[int] = DEFAULT_HIDDEN_WIDTHS,
                n_classes: int = 10, seed: int = 0, dtype=np.float32,
                init_gain: float = np.sqrt(6.0)) -> ModelParams:
    """Fan-in scaled uniform init ``U(-g/sqrt(fan_in), g/sqrt(fan_in))``, zero biases.

    The default gain g = sqrt(6) keeps activation variance roughly constant through a
    deep ReLU stack; with a 1/sqrt(fan_in) bound the signal of the default
    12-layer net shrinks by ~1e-4 before reaching the classifier.
    """
    widths = [int(input_width), *[int(w) for w in hidden_widths], int(n_classes)]
    if min(widths) < 1:
        raise ValueError("all widths must be >= 1")
    if not init_gain > 0:
        raise ValueError("init_gain must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = init_gain / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return ModelParams(weights, biases, has_output=True)


def split_at(model: ModelParams, cut_index: int) -> SplitModel:
    """Blocks ``0..cut_index`` go to the device, the rest (with the classifier) to the server."""
    if not model.has_output:
        raise ValueError("only a full model can be split")
    if not 0 <= cut_index < model.n_layers - 1:
        raise ValueError(f"cut_index must lie in [0, {model.n_layers - 2}], got {cut_index}")
    c = cut_index + 1
    device = ModelParams([w.copy() for w in model.weights[:c]],
                         [b.copy() for b in model.biases[:c]], has_output=False)
    server = ModelParams([w.copy() for w in model.weights[c:]],
                         [b.copy() for b in model.biases[c:]], has_output=True)
    return SplitModel(device, server, cut_index)


def merge(split: SplitModel) -> ModelParams:
    return ModelParams([w.copy() for w in split.device_part.weights + split.server_part.weights],
                       [b.copy() for b in split.device_part.biases + split.server_part.biases],
                       has_output=True)


# -- forward / backward -----------------------------------------------------

def _forward_relu(params: ModelParams, x: np.ndarray, cache: _Cache, n_layers: int) -> np.ndarray:
    h = x
    for w, b in zip(params.weights[:n_layers], params.biases[:n_layers]):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre.append(z)
        h = np.maximum(z, 0)
    return h


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def forward_device(device_part: ModelParams, batch: np.ndarray, labels=None):
    """Run the device blocks; returns the cut activations and the backward cache."""
    x = np.asarray(batch, dtype=device_part.dtype)
    if x.ndim != 2 or x.shape[1] != device_part.weights[0].shape[0]:
        raise ValueError(f"input shape {x.shape} does not match the first layer")
    cache = _Cache()
    a = _forward_relu(device_part, x, cache, device_part.n_layers)
    return ActivationBatch(a, None if labels is None else np.asarray(labels)), cache


def _server_forward(part: ModelParams, h: np.ndarray, labels: np.ndarray, cache: _Cache):
    h = _forward_relu(part, h, cache, part.n_layers - 1)
    cache.inputs.append(h)
    logits = h @ part.weights[-1] + part.biases[-1]
    cache.pre.append(logits)
    probs = _softmax(logits)
    cache.probs, cache.labels = probs, labels
    return probs, _cross_entropy(probs, labels)


def forward_server(server_part: ModelParams, activations: ActivationBatch, labels=None):
    """Finish the forward pass; returns (class probabilities, mean loss, cache)."""
    labels = activations.labels if labels is None else labels
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = server_part.weights[-1].shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    a = np.asarray(activations.activations, dtype=server_part.dtype)
    if a.shape[1] != server_part.weights[0].shape[0]:
        raise ValueError("activation width does not match the server's first layer")
    cache = _Cache()
    probs, loss = _server_forward(server_part, a, labels, cache)
    return probs, loss, cache


def _backward(params: ModelParams, cache: _Cache, grad_out: np.ndarray, from_logits: bool):
    """Backprop through ``params``; returns (per-array grads, grad wrt the input)."""
    grads = [None] * (2 * params.n_layers)
    g = grad_out
    for i in range(params.n_layers - 1, -1, -1):
        if not (from_logits and i == params.n_layers - 1):
            g = g * (cache.pre[i] > 0)
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return grads, g


def _logit_grad(cache: _Cache) -> np.ndarray:
    n = len(cache.labels)
    g = cache.probs.copy()
    g[np.arange(n), cache.labels] -= 1
    return g / g.dtype.type(n)


def model_gradients(params: ModelParams, x: np.ndarray, labels: np.ndarray):
    """Loss and parameter gradients of a full model (no update)."""
    cache = _Cache()
    x = np.asarray(x, dtype=params.dtype)
    _, loss = _server_forward(params, x, np.asarray(labels, dtype=np.int64), cache)
    grads, dx = _backward(params, cache, _logit_grad(cache), from_logits=True)
    return loss, grads, dx


def split_gradients(split: SplitModel, x: np.ndarray, labels: np.ndarray):
    """Loss, device grads, server grads and the cut-layer gradient, without an update."""
    acts, dcache = forward_device(split.device_part, x, labels)
    _, loss, scache = forward_server(split.server_part, acts)
    server_grads, act_grad = _backward(split.server_part, scache, _logit_grad(scache), from_logits=True)
    device_grads, _ = _backward(split.device_part, dcache, act_grad, from_logits=False)
    return loss, device_grads, server_grads, act_grad


def adam_step(params: ModelParams, grads: Sequence[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    arrays = params.arrays()
    if len(arrays) != len(grads) or len(state.m) != len(arrays):
        raise ValueError("optimizer state does not match the parameters")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


def backward_server(server_part: ModelParams, cache: _Cache, state: AdamState | None = None,
                    lr: float = 0.01):
    """Server backprop + one Adam step; returns (gradient for the device, server_part)."""
    grads, act_grad = _backward(server_part, cache, _logit_grad(cache), from_logits=True)
    if state is not None:
        adam_step(server_part, grads, state, lr)
    return act_grad, server_part


def backward_device(device_part: ModelParams, cache: _Cache, activation_grad: np.ndarray,
                    state: AdamState | None = None, lr: float = 0.01) -> ModelParams:
    if activation_grad.shape != cache.pre[-1].shape:
        raise ValueError("activation gradient shape does not match the cut activations")
    grads, _ = _backward(device_part, cache, activation_grad, from_logits=False)
    if state is not None:
        adam_step(device_part, grads, state, lr)
    return device_part


def train_step_split(split: SplitModel, x, labels, device_state: AdamState,
                     server_state: AdamState, lr: float = 0.01) -> float:
    """One local step of split training: device fwd -> server fwd/bwd -> device bwd."""
    acts, dcache = forward_device(split.device_part, x, labels)
    _, loss, scache = forward_server(split.server_part, acts)
    act_grad, _ = backward_server(split.server_part, scache, server_state, lr)
    backward_device(split.device_part, dcache, act_grad, device_state, lr)
    return loss


def train_step_monolithic(model: ModelParams, x, labels, state: AdamState, lr: float = 0.01) -> float:
    loss, grads, _ = model_gradients(model, x, labels)
    adam_step(model, grads, state, lr)
    return loss


def predict(device_part: ModelParams, server_part: ModelParams, x: np.ndarray) -> np.ndarray:
    acts, _ = forward_device(device_part, x)
    cache = _Cache()
    h = _forward_relu(server_part, acts.activations, cache, server_part.n_layers - 1)
    return np.argmax(h @ server_part.weights[-1] + server_part.biases[-1], axis=1)


# -- federated averaging ----------------------------------------------------

def _normalized(weights: Sequence[float], n: int) -> list[float]:
    w = [float(x) for x in weights]
    if len(w) != n:
        raise ValueError("need one weight per model")
    if any(x < 0 for x in w):
        raise ValueError("weights must be >= 0")
    total = sum(w)
    if total <= 0:
        raise ValueError("weights must not all be zero")
    return [x / total for x in w]


def _average(arrays: Sequence[np.ndarray], weights: list[float]) -> np.ndarray:
    acc = np.zeros(arrays[0].shape, dtype=np.float64)
    for w, a in zip(weights, arrays):
        acc += w * a.astype(np.float64)
    return acc.astype(arrays[0].dtype)


def fedavg(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Parameter-wise weighted mean, weights normalised to one, float64 accumulation."""
    if not models:
        raise ValueError("no models to average")
    for m in models[1:]:
        if not m.same_shapes(models[0]):
            raise ValueError("models differ in shape")
    w = _normalized(weights, len(models))
    arrays = [m.arrays() for m in models]
    avg = [_average([a[j] for a in arrays], w) for j in range(len(arrays[0]))]
    return ModelParams(avg[0::2], avg[1::2], models[0].has_output)


def fedavg_adam(states: Sequence[AdamState], weights: Sequence[float]) -> AdamState:
    w = _normalized(weights, len(states))
    n = len(states[0].m)
    m = [_average([s.m[j] for s in states], w) for j in range(n)]
    v = [_average([s.v[j] for s in states], w) for j in range(n)]
    return AdamState(m, v, max(s.t for s in states))


# -- checkpoints ------------------------------------------------------------
# Layout (little endian): b"SBNN", u32 version, u32 layer count, u8 has_output,
# then per layer u32 in, u32 out, in*out f32 weights (row-major), out f32 biases.

_MAGIC = b"SBNN"
_VERSION = 1


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIB", _VERSION, params.n_layers, int(params.has_output)))
        for w, b in zip(params.weights, params.biases):
            fh.write(struct.pack("<II", *w.shape))
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, n_layers, has_output = struct.unpack_from("<IIB", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 13
    weights, biases = [], []
    for _ in range(n_layers):
        n_in, n_out = struct.unpack_from("<II", data, off)
        off += 8
        w = np.frombuffer(data, dtype="<f4", count=n_in * n_out, offset=off).reshape(n_in, n_out)
        off += 4 * n_in * n_out
        b = np.frombuffer(data, dtype="<f4", count=n_out, offset=off)
        off += 4 * n_out
        weights.append(w.astype(np.float32))
        biases.append(b.astype(np.float32))
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return ModelParams(weights, biases, bool(has_output))

