"""Small MLP classifier with full-rank and frozen-base + LoRA layers.

Activations are row-major batches: a layer maps h (N x m) to act(h @ W_eff)
with W_eff of shape m x n. For a LoRA layer W_eff = W0 + A @ B where W0 is
frozen, A is m x r and B is r x n. The rows of every weight (and of A) index
the layer's input space, which is where gradient projection operates.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from gorp.errors import DataError, ShapeError, SpecError, UsageError

FULL = "full"
LORA = "lora"
ACTIVATIONS = ("relu", "tanh", "none")


@dataclass
class LayerSpec:
    name: str
    in_dim: int
    out_dim: int
    kind: str = FULL
    activation: str = "relu"
    lora_rank: int = 8


@dataclass
class ModelSpec:
    input_dim: int
    num_classes: int
    layers: list[LayerSpec]
    seed: int = 0

    def validate(self) -> None:
        if not self.layers:
            raise SpecError("model needs at least one layer")
        names = [ls.name for ls in self.layers]
        if len(set(names)) != len(names):
            raise SpecError(f"layer names must be unique, got {names}")
        prev = self.input_dim
        for ls in self.layers:
            if ls.in_dim != prev:
                raise SpecError(f"layer {ls.name!r} expects input dim {ls.in_dim} but receives {prev}")
            if ls.kind not in (FULL, LORA):
                raise SpecError(f"layer {ls.name!r}: unknown kind {ls.kind!r}")
            if ls.activation not in ACTIVATIONS:
                raise SpecError(f"layer {ls.name!r}: unknown activation {ls.activation!r}")
            if ls.kind == LORA and not 1 <= ls.lora_rank <= min(ls.in_dim, ls.out_dim):
                raise SpecError(f"layer {ls.name!r}: lora_rank {ls.lora_rank} outside [1, min(m, n)]")
            prev = ls.out_dim
        if prev != self.num_classes:
            raise SpecError(f"last layer outputs {prev} values for {self.num_classes} classes")


@dataclass
class Layer:
    name: str
    kind: str
    activation: str
    W: np.ndarray | None = None
    W0: np.ndarray | None = None
    A: np.ndarray | None = None
    B: np.ndarray | None = None

    def effective_weight(self) -> np.ndarray:
        if self.kind == FULL:
            return self.W
        return self.W0 + self.A @ self.B

    def trainable(self) -> dict[str, np.ndarray]:
        if self.kind == FULL:
            return {"W": self.W}
        return {"A": self.A, "B": self.B}


@dataclass
class Model:
    spec: ModelSpec
    layers: list[Layer]
    version: int = 0

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable matrices keyed '<layer>.<W|A|B>'. Arrays are live views."""
        out = {}
        for layer in self.layers:
            for pname, arr in layer.trainable().items():
                out[f"{layer.name}.{pname}"] = arr
        return out

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def mark_updated(self) -> None:
        self.version += 1

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def init_model(spec: ModelSpec, seed: int | None = None) -> Model:
    spec.validate()
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    layers = []
    for ls in spec.layers:
        std = 1.0 / np.sqrt(ls.in_dim)
        if ls.kind == FULL:
            w = rng.normal(0.0, std, size=(ls.in_dim, ls.out_dim))
            layers.append(Layer(ls.name, FULL, ls.activation, W=w))
        else:
            w0 = rng.normal(0.0, std, size=(ls.in_dim, ls.out_dim))
            a = rng.normal(0.0, std, size=(ls.in_dim, ls.lora_rank))
            b = np.zeros((ls.lora_rank, ls.out_dim))
            w0.setflags(write=False)
            layers.append(Layer(ls.name, LORA, ls.activation, W0=w0, A=a, B=b))
    return Model(spec, layers)


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class Cache:
    version: int
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]
    post: list[np.ndarray]
    probs: np.ndarray
    labels: np.ndarray = field(repr=False)


def _check_batch(model: Model, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ShapeError(f"batch inputs must be N x {model.spec.input_dim}, got {x.shape}")
    y = np.asarray(y)
    if y.shape != (x.shape[0],):
        raise ShapeError(f"labels must have shape ({x.shape[0]},), got {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.spec.num_classes):
        raise DataError(f"labels must lie in [0, {model.spec.num_classes})")
    return x, y.astype(np.intp)


def logits(model: Model, x) -> np.ndarray:
    h = np.asarray(x, dtype=np.float64)
    for layer in model.layers:
        h = _act(layer.activation, h @ layer.effective_weight())
    return h


def forward(model: Model, x, y) -> tuple[float, Cache]:
    """Mean softmax cross-entropy of the batch, plus what backward needs."""
    x, y = _check_batch(model, x, y)
    if x.shape[0] == 0:
        raise DataError("empty batch")
    inputs, pre, post = [], [], []
    h = x
    for layer in model.layers:
        inputs.append(h)
        z = h @ layer.effective_weight()
        h = _act(layer.activation, z)
        pre.append(z)
        post.append(h)
    shifted = h - h.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(len(y)), y]))
    probs = np.exp(shifted - lse[:, None])
    return loss, Cache(model.version, inputs, pre, post, probs, y)


def backward(model: Model, cache: Cache) -> dict[str, np.ndarray]:
    """Exact gradients of the mean cross-entropy for every trainable matrix."""
    if cache.version != model.version:
        raise UsageError("cache was produced before the model was last updated; rerun forward")
    n = len(cache.labels)
    delta = cache.probs.copy()
    delta[np.arange(n), cache.labels] -= 1.0
    delta /= n
    grads: dict[str, np.ndarray] = {}
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        dz = delta * _act_grad(layer.activation, cache.pre[i], cache.post[i])
        g_eff = cache.inputs[i].T @ dz
        if layer.kind == FULL:
            grads[f"{layer.name}.W"] = g_eff
        else:
            grads[f"{layer.name}.A"] = g_eff @ layer.B.T
            grads[f"{layer.name}.B"] = layer.A.T @ g_eff
        if i > 0:
            delta = dz @ layer.effective_weight().T
    return grads


def evaluate(model: Model, x, y) -> float:
    x, y = _check_batch(model, x, y)
    if x.shape[0] == 0:
        raise DataError("cannot evaluate on an empty dataset")
    pred = np.argmax(logits(model, x), axis=1)  # first maximum wins ties
    return float(np.mean(pred == y))
