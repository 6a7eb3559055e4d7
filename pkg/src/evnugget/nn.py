"""Small dense feed-forward networks trained with mini-batch SGD.

A net with layer sizes ``[n0, n1, ..., nL]`` has ``L`` weight layers; weight
layer ``k`` maps ``n_k -> n_{k+1}`` and applies ``activations[k]``.
``dropout_rates[k]`` is applied to the vector of width ``n_k`` (entry 0 is
input dropout, the final entry must be 0). Dropout is inverted: kept units
are scaled by ``1 / (1 - rate)`` during training so inference uses the raw
weights.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "sigmoid", "softmax", "identity")

_MAGIC = b"EVNUGNN\x00"
_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    layer_sizes: tuple[int, ...]
    dropout_rates: tuple[float, ...]
    activations: tuple[str, ...]
    epochs: int = 10
    seed: int = 0
    learning_rate: float = 0.01
    batch_size: int = 32
    shuffle: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "dropout_rates", tuple(float(r) for r in self.dropout_rates))
        object.__setattr__(self, "activations", tuple(self.activations))
        n = len(self.layer_sizes)
        if n < 2 or any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"need at least two positive layer sizes, got {self.layer_sizes}")
        if len(self.dropout_rates) != n:
            raise ValueError("one dropout rate per layer size is required")
        if any(not 0.0 <= r < 1.0 for r in self.dropout_rates):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.dropout_rates[-1] != 0.0:
            raise ValueError("the output layer cannot use dropout")
        if len(self.activations) != n - 1:
            raise ValueError("one activation per weight layer is required")
        for i, a in enumerate(self.activations):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if a == "softmax" and i != n - 2:
                raise ValueError("softmax is only allowed on the output layer")
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate < 0:
            raise ValueError("epochs and batch_size must be positive, learning_rate non-negative")

    @classmethod
    def from_table(cls, layers: str, dropouts: str, epochs: int | str, **kwargs) -> "NetConfig":
        """Build from dash-separated recipe strings such as ``2468-600-600-50-4``.

        Missing trailing dropout entries are zero. Activations default to relu
        on the first weight layer, tanh on the remaining hidden ones and softmax
        on the output.
        """
        sizes = tuple(int(s) for s in layers.split("-"))
        rates = [float(r) for r in dropouts.split("-")] if dropouts else []
        if len(rates) > len(sizes):
            raise ValueError(f"more dropout entries than layers in {dropouts!r}")
        rates += [0.0] * (len(sizes) - len(rates))
        n_weight = len(sizes) - 1
        acts = ["relu"] + ["tanh"] * (n_weight - 2) + ["softmax"] if n_weight > 1 else ["softmax"]
        kwargs.setdefault("activations", tuple(acts))
        return cls(sizes, tuple(rates), epochs=int(epochs), **kwargs)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetConfig":
        data = json.loads(text)
        return cls(**data)


@dataclass(eq=False)
class DenseNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: NetConfig

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match config")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ValueError(f"layer {k} shape {w.shape}/{b.shape} does not match config")

    @property
    def input_size(self) -> int:
        return self.config.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.config.layer_sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.config)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class Cache:
    inputs: list[np.ndarray] = field(default_factory=list)   # layer inputs after dropout
    preacts: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)  # activations before dropout
    masks: list[np.ndarray | None] = field(default_factory=list)  # per layer size, scaled
    squeeze: bool = False


def init_net(config: NetConfig, rng: np.random.Generator | None = None) -> DenseNet:
    """Glorot-uniform weights, zero biases."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    sizes = config.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return DenseNet(weights, biases, config)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "softmax":
        return softmax(z)
    return z


def activation_backward(name: str, z: np.ndarray, h: np.ndarray, grad_h: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. the activation output to one w.r.t. its input."""
    if name == "relu":
        return grad_h * (z > 0)
    if name == "tanh":
        return grad_h * (1.0 - h * h)
    if name == "sigmoid":
        return grad_h * h * (1.0 - h)
    if name == "softmax":
        return h * (grad_h - (grad_h * h).sum(axis=-1, keepdims=True))
    return grad_h


def _dropout(x: np.ndarray, rate: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def forward(net: DenseNet, x: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, Cache]:
    """Run ``x`` (one vector or a row batch) through the net."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ValueError(f"input width {x.shape[-1]} does not match net input {net.input_size}")
    train = mode == "train"
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    if train and rng is None:
        raise ValueError("train mode needs an rng for dropout masks")
    cache = Cache(squeeze=squeeze)
    rates = net.config.dropout_rates
    a = x
    mask = None
    if train and rates[0] > 0:
        a, mask = _dropout(a, rates[0], rng)
    cache.masks.append(mask)
    for k, (w, b, act) in enumerate(zip(net.weights, net.biases, net.config.activations)):
        cache.inputs.append(a)
        z = a @ w.T + b
        h = activate(act, z)
        cache.preacts.append(z)
        cache.outputs.append(h)
        mask = None
        if train and rates[k + 1] > 0:
            h, mask = _dropout(h, rates[k + 1], rng)
        cache.masks.append(mask)
        a = h
    return (a[0] if squeeze else a), cache


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])


def backward(net: DenseNet, cache: Cache, grad: np.ndarray, of: str = "output") -> Gradients:
    """Backpropagate ``grad`` through a cached forward pass.

    ``of="output"`` means ``grad`` is w.r.t. the net output; ``of="preact"``
    means it is already w.r.t. the pre-activation of the last layer (the usual
    shortcut for softmax/sigmoid with cross-entropy).
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim == 1:
        grad = grad[None, :]
    n_layers = len(net.weights)
    g_w: list[np.ndarray] = [None] * n_layers
    g_b: list[np.ndarray] = [None] * n_layers
    delta = None
    for k in reversed(range(n_layers)):
        if delta is None and of == "preact":
            delta = grad
        else:
            g = grad if delta is None else delta @ net.weights[k + 1]
            mask = cache.masks[k + 1]
            if mask is not None:
                g = g * mask
            delta = activation_backward(net.config.activations[k], cache.preacts[k], cache.outputs[k], g)
        g_w[k] = delta.T @ cache.inputs[k]
        g_b[k] = delta.sum(axis=0)
    g_in = delta @ net.weights[0]
    if cache.masks[0] is not None:
        g_in = g_in * cache.masks[0]
    return Gradients(g_w, g_b, g_in[0] if cache.squeeze else g_in)


def _output_targets(net: DenseNet, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    n_out = net.output_size
    act = net.config.activations[-1]
    if act == "sigmoid" and n_out == 1:
        return y.astype(np.float64).reshape(-1, 1)
    if act not in ("softmax", "sigmoid"):
        raise ValueError(f"no loss defined for a {act} output layer")
    targets = np.zeros((len(y), n_out))
    targets[np.arange(len(y)), y.astype(int)] = 1.0
    return targets


def loss(net: DenseNet, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy with dropout off (categorical or binary per output)."""
    out, _ = forward(net, np.atleast_2d(X))
    targets = _output_targets(net, y)
    eps = 1e-300
    if net.config.activations[-1] == "softmax":
        return float(-(targets * np.log(np.maximum(out, eps))).sum(axis=1).mean())
    ll = targets * np.log(np.maximum(out, eps)) + (1 - targets) * np.log(np.maximum(1 - out, eps))
    return float(-ll.sum(axis=1).mean())


def _batch_gradient(net, X, y, mode="infer", rng=None) -> tuple[Gradients, float]:
    out, cache = forward(net, X, mode, rng)
    targets = _output_targets(net, y)
    n = len(X)
    eps = 1e-300
    if net.config.activations[-1] == "softmax":
        batch_loss = -(targets * np.log(np.maximum(out, eps))).sum() / n
    else:
        batch_loss = -(targets * np.log(np.maximum(out, eps))
                       + (1 - targets) * np.log(np.maximum(1 - out, eps))).sum() / n
    return backward(net, cache, (out - targets) / n, of="preact"), float(batch_loss)


def gradient(net: DenseNet, batch: tuple[np.ndarray, np.ndarray]) -> Gradients:
    """Exact gradient of the mean cross-entropy of ``batch`` with dropout disabled."""
    X, y = batch
    return _batch_gradient(net, np.atleast_2d(np.asarray(X, dtype=np.float64)), np.asarray(y))[0]


def _check_dataset(config: NetConfig, X: np.ndarray, y: np.ndarray, n_classes: int | None):
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError("features and labels differ in length")
    if X.shape[1] != config.layer_sizes[0]:
        raise ValueError(f"feature width {X.shape[1]} does not match input layer {config.layer_sizes[0]}")
    limit = config.layer_sizes[-1] if n_classes is None else n_classes
    if config.layer_sizes[-1] == 1:
        limit = 2
    if y.min() < 0 or y.max() >= limit:
        raise ValueError(f"label out of range [0, {limit})")


def train(config: NetConfig, X: np.ndarray, y: Sequence[int], n_classes: int | None = None,
          name: str = "net") -> DenseNet:
    """Train a fresh net for exactly ``config.epochs`` passes over the data.

    Initialisation, per-epoch shuffling and dropout masks all draw from one
    generator seeded with ``config.seed``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    _check_dataset(config, X, y, n_classes)
    if n_classes is not None and config.layer_sizes[-1] not in (n_classes, 1):
        raise ValueError(f"output width {config.layer_sizes[-1]} but {n_classes} classes")
    rng = np.random.default_rng(config.seed)
    net = init_net(config, rng)
    lr = config.learning_rate
    n = len(X)
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads, batch_loss = _batch_gradient(net, X[idx], y[idx], "train", rng)
            total += batch_loss * len(idx)
            if lr:
                for k in range(len(net.weights)):
                    net.weights[k] -= lr * grads.weights[k]
                    net.biases[k] -= lr * grads.biases[k]
        log.info("%s epoch %d/%d loss %.6f", name, epoch + 1, config.epochs, total / n)
    return net


def predict(net: DenseNet, X: np.ndarray) -> np.ndarray:
    return forward(net, np.atleast_2d(X))[0]


def accuracy(net: DenseNet, X: np.ndarray, y: Sequence[int]) -> float:
    out = predict(net, X)
    if out.shape[1] == 1:
        pred = (out[:, 0] > 0.5).astype(int)
    else:
        pred = out.argmax(axis=1)
    return float((pred == np.asarray(y)).mean())


def serialize(net: DenseNet) -> bytes:
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(net.weights))]
    for w in net.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    cfg = net.config.to_json().encode("utf-8")
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    return b"".join(parts)


def deserialize(data: bytes) -> DenseNet:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ModelFormatError("truncated model payload")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(_MAGIC))) != _MAGIC:
        raise ModelFormatError("bad magic header")
    version, n_layers = struct.unpack("<II", take(8))
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    shapes = [struct.unpack("<II", take(8)) for _ in range(n_layers)]
    weights, biases = [], []
    for rows, cols in shapes:
        weights.append(np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64))
        biases.append(np.frombuffer(take(8 * rows), dtype="<f8").astype(np.float64))
    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = NetConfig.from_json(bytes(take(cfg_len)).decode("utf-8"))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"bad config block: {exc}") from None
    if pos != len(view):
        raise ModelFormatError("trailing bytes after model payload")
    try:
        return DenseNet(weights, biases, config)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def save(net: DenseNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load(path) -> DenseNet:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def with_seed(config: NetConfig, seed: int) -> NetConfig:
    return replace(config, seed=seed)
