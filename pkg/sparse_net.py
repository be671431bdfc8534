"""
Sparse multilayer perceptron core.

Every weight matrix is stored as an explicit list of active coordinates
(rows, cols sorted by (row, col)) with one value and one pair of Adam moments
per coordinate. Inactive positions do not exist: they never take part in the
forward pass, in the gradients or in the optimizer state. Biases are dense.

All arithmetic is float64.
"""

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

ACTIVATIONS = ("relu", "identity")
DEFAULT_HIDDEN_SIZES = (1000, 100)


def active_count(n_in: int, n_out: int, sparsity: float) -> int:
    """Number of active weights of an n_in x n_out matrix at sparsity P (half-up rounding, at least 1)."""
    return max(1, int(math.floor((1.0 - sparsity) * n_in * n_out + 0.5)))


# ---------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------
@dataclass
class SparseLayer:
    """One weight matrix in coordinate form plus a dense bias."""

    n_in: int
    n_out: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    bias: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    bias_m: np.ndarray
    bias_v: np.ndarray

    @classmethod
    def from_flat(cls, n_in: int, n_out: int, flat: np.ndarray, values: np.ndarray,
                  bias: Optional[np.ndarray] = None,
                  adam_m: Optional[np.ndarray] = None,
                  adam_v: Optional[np.ndarray] = None) -> "SparseLayer":
        """Build a layer from row-major flat positions; coordinates end up sorted."""
        flat = np.asarray(flat, dtype=np.int64)
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        values = np.asarray(values, dtype=np.float64)[order]
        m = np.zeros_like(values) if adam_m is None else np.asarray(adam_m, dtype=np.float64)[order]
        v = np.zeros_like(values) if adam_v is None else np.asarray(adam_v, dtype=np.float64)[order]
        b = np.zeros(n_out, dtype=np.float64) if bias is None else np.asarray(bias, dtype=np.float64).copy()
        layer = cls(
            n_in=int(n_in), n_out=int(n_out),
            rows=flat // n_out, cols=flat % n_out,
            values=values, bias=b, adam_m=m, adam_v=v,
            bias_m=np.zeros(n_out), bias_v=np.zeros(n_out),
        )
        layer.validate()
        return layer

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def size(self) -> int:
        return self.n_in * self.n_out

    @property
    def sparsity(self) -> float:
        return 1.0 - self.nnz / self.size

    @property
    def flat_index(self) -> np.ndarray:
        return self.rows * self.n_out + self.cols

    def coords(self) -> np.ndarray:
        """Active coordinates as an (nnz, 2) array of (row, col)."""
        return np.column_stack([self.rows, self.cols])

    def inactive_flat(self) -> np.ndarray:
        """Sorted flat positions of every inactive entry."""
        return np.setdiff1d(np.arange(self.size, dtype=np.int64), self.flat_index, assume_unique=True)

    def to_csr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.n_in, self.n_out))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_in, self.n_out))
        dense[self.rows, self.cols] = self.values
        return dense

    def matmul(self, a: np.ndarray) -> np.ndarray:
        """a @ W + b through the active coordinates only."""
        return np.asarray(self.to_csr().T @ a.T).T + self.bias

    def backprop(self, delta: np.ndarray) -> np.ndarray:
        """delta @ W.T through the active coordinates only."""
        return np.asarray(self.to_csr() @ delta.T).T

    def copy(self) -> "SparseLayer":
        return SparseLayer(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                              for k, v in self.__dict__.items()})

    def validate(self) -> None:
        n = self.values.shape[0]
        for name in ("rows", "cols", "adam_m", "adam_v"):
            if getattr(self, name).shape[0] != n:
                raise DataError(f"layer {self.n_in}x{self.n_out}: '{name}' not aligned with values")
        if n and (self.rows.min() < 0 or self.rows.max() >= self.n_in
                  or self.cols.min() < 0 or self.cols.max() >= self.n_out):
            raise DataError(f"layer {self.n_in}x{self.n_out}: coordinate out of range")
        flat = self.flat_index
        if n > 1 and np.any(np.diff(flat) <= 0):
            raise DataError(f"layer {self.n_in}x{self.n_out}: coordinates duplicated or unsorted")
        if self.bias.shape != (self.n_out,):
            raise DataError(f"layer {self.n_in}x{self.n_out}: bias has shape {self.bias.shape}")


@dataclass
class Network:
    """Ordered sparse layers d -> hidden... -> C with softmax output."""

    layers: List[SparseLayer]
    hidden_activation: str = "relu"
    sparsity: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        if self.hidden_activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{self.hidden_activation}', expected one of {ACTIVATIONS}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ConfigError(f"layer dimensions do not chain: {prev.n_out} -> {nxt.n_in}")

    @property
    def n_features(self) -> int:
        return self.layers[0].n_in

    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_out

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def shape(self) -> List[Tuple[int, int]]:
        return [(layer.n_in, layer.n_out) for layer in self.layers]

    def active_counts(self) -> List[int]:
        return [layer.nnz for layer in self.layers]

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers], self.hidden_activation,
                       self.sparsity, self.step_count)


@dataclass
class TrainConfig:
    """Optimizer and early-stopping settings."""

    learning_rate: float = 0.001
    l2: float = 1e-4
    batch_size: int = 100
    max_epochs: int = 200
    patience: int = 50
    seed: int = 0
    loss: str = "categorical_crossentropy"
    log_every: int = 10

    SMALL_DATASET = 200
    SMALL_BATCH = 32

    @classmethod
    def for_dataset(cls, n_samples: int, **overrides) -> "TrainConfig":
        """Protocol default: batch 32 below 200 samples, else 100."""
        if "batch_size" not in overrides or overrides["batch_size"] is None:
            overrides["batch_size"] = cls.SMALL_BATCH if n_samples < cls.SMALL_DATASET else 100
        return cls(**overrides)

    def validate(self) -> "TrainConfig":
        if self.learning_rate < 0 or self.l2 < 0:
            raise ConfigError("learning_rate and l2 must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError(f"patience ({self.patience}) exceeds max_epochs ({self.max_epochs})")
        return self

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass
class ForwardCache:
    """Activations kept from a forward pass for backprop and attribution."""

    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    logits: np.ndarray
    probabilities: np.ndarray


@dataclass
class Gradients:
    """Gradients aligned with each layer's active coordinates."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    loss: float
    cross_entropy: float = field(default=0.0)


# ---------------------------------------------------------------------
# Activations and losses
# ---------------------------------------------------------------------
def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def _activation_grad(z: np.ndarray, kind: str) -> np.ndarray:
    # relu sub-gradient at 0 is 0
    return (z > 0.0).astype(np.float64) if kind == "relu" else np.ones_like(z)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean categorical cross-entropy of integer labels."""
    logp = log_softmax(logits)
    return float(-logp[np.arange(labels.shape[0]), labels].mean())


def l2_penalty(net: Network, l2: float) -> float:
    return float(l2 * sum(np.dot(layer.values, layer.values) for layer in net.layers))


# ---------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------
def init_network(d: int, C: int, P: float, seed: int,
                 hidden_sizes: Sequence[int] = DEFAULT_HIDDEN_SIZES,
                 hidden_activation: str = "relu") -> Network:
    """
    Random sparse network at sparsity P in every layer.

    Active positions are sampled uniformly without replacement, active values
    from N(0, 2 / n_in), biases start at zero.
    """
    if not 0.0 <= P < 1.0:
        raise ConfigError(f"sparsity must lie in [0, 1), got {P}")
    if d < 1 or C < 1:
        raise ConfigError(f"feature and class counts must be >= 1 (d={d}, C={C})")

    rng = np.random.default_rng(seed)
    dims = [int(d), *[int(h) for h in hidden_sizes], int(C)]
    layers = []
    for n_in, n_out in zip(dims, dims[1:]):
        size = n_in * n_out
        nnz = active_count(n_in, n_out, P)
        flat = np.sort(rng.choice(size, size=nnz, replace=False))
        values = rng.normal(0.0, math.sqrt(2.0 / n_in), size=nnz)
        layers.append(SparseLayer.from_flat(n_in, n_out, flat, values))

    net = Network(layers, hidden_activation=hidden_activation, sparsity=float(P))
    logger.debug("Initialized network %s at sparsity %.2f with %s active weights",
                 dims, P, net.active_counts())
    return net


def forward(net: Network, X: np.ndarray) -> ForwardCache:
    """Forward pass keeping every layer input and pre-activation."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != net.n_features:
        raise DataError(f"input has shape {a.shape}, network expects {net.n_features} features")

    inputs, pre = [], []
    last = net.n_layers - 1
    for idx, layer in enumerate(net.layers):
        inputs.append(a)
        z = layer.matmul(a)
        pre.append(z)
        if idx < last:
            a = _activate(z, net.hidden_activation)
    return ForwardCache(inputs=inputs, pre_activations=pre, logits=z, probabilities=softmax(z))


def _check_labels(net: Network, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != np.atleast_2d(np.asarray(X)).shape[0]:
        raise DataError("labels do not match the batch size")
    if labels.size and (labels.min() < 0 or labels.max() >= net.n_classes):
        raise DataError(f"labels must lie in [0, {net.n_classes})")
    return labels


def _output_delta(cache: ForwardCache, labels: np.ndarray) -> np.ndarray:
    m = labels.shape[0]
    delta = cache.probabilities.copy()
    delta[np.arange(m), labels] -= 1.0
    return delta / m


def backward(net: Network, X: np.ndarray, labels: np.ndarray, l2: float = 0.0,
             cache: Optional[ForwardCache] = None) -> Gradients:
    """
    Gradients of mean cross-entropy + l2 * sum(w^2) on the active coordinates.
    A cache from forward(net, X) may be passed to skip the forward pass.
    """
    labels = _check_labels(net, X, labels)
    if cache is None:
        cache = forward(net, X)

    delta = _output_delta(cache, labels)
    w_grads: List[np.ndarray] = [None] * net.n_layers
    b_grads: List[np.ndarray] = [None] * net.n_layers
    for idx in range(net.n_layers - 1, -1, -1):
        layer = net.layers[idx]
        a_prev = cache.inputs[idx]
        # gathered from the dense outer product; only active entries are kept
        dense = a_prev.T @ delta
        w_grads[idx] = dense[layer.rows, layer.cols] + 2.0 * l2 * layer.values
        b_grads[idx] = delta.sum(axis=0)
        if idx > 0:
            delta = layer.backprop(delta) * _activation_grad(cache.pre_activations[idx - 1],
                                                             net.hidden_activation)

    ce = cross_entropy(cache.logits, labels)
    return Gradients(weights=w_grads, biases=b_grads, loss=ce + l2_penalty(net, l2), cross_entropy=ce)


def dense_weight_gradients(net: Network, X: np.ndarray, labels: np.ndarray,
                           l2: float = 0.0) -> List[np.ndarray]:
    """
    Loss gradient for every position of every weight matrix, inactive ones
    included. Used by gradient-based regrowth; the L2 term only touches
    active entries since inactive weights are structurally zero.
    """
    labels = _check_labels(net, X, labels)
    cache = forward(net, X)
    delta = _output_delta(cache, labels)
    grads: List[np.ndarray] = [None] * net.n_layers
    for idx in range(net.n_layers - 1, -1, -1):
        layer = net.layers[idx]
        g = cache.inputs[idx].T @ delta
        g[layer.rows, layer.cols] += 2.0 * l2 * layer.values
        grads[idx] = g
        if idx > 0:
            delta = layer.backprop(delta) * _activation_grad(cache.pre_activations[idx - 1],
                                                             net.hidden_activation)
    return grads


def input_gradient(net: Network, cache: ForwardCache, seed: np.ndarray) -> np.ndarray:
    """
    Backpropagate a seed on the logits down to the inputs.

    seed has the logits' shape; the result has the inputs' shape and holds
    d(sum_i seed_i * logit_i) / dx for every sample.
    """
    delta = np.asarray(seed, dtype=np.float64)
    for idx in range(net.n_layers - 1, -1, -1):
        delta = net.layers[idx].backprop(delta)
        if idx > 0:
            delta = delta * _activation_grad(cache.pre_activations[idx - 1], net.hidden_activation)
    return delta


def adam_step(net: Network, grads: Gradients, t: Optional[int] = None,
              learning_rate: float = 0.001) -> Network:
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8) of active weights and biases, in place."""
    if len(grads.weights) != net.n_layers or len(grads.biases) != net.n_layers:
        raise DataError("gradients do not match the network's layers")
    t = net.step_count + 1 if t is None else int(t)
    if t < 1:
        raise ConfigError(f"Adam step must be >= 1, got {t}")

    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for layer, gw, gb in zip(net.layers, grads.weights, grads.biases):
        if gw.shape != layer.values.shape or gb.shape != layer.bias.shape:
            raise DataError(f"gradient not aligned with layer {layer.n_in}x{layer.n_out}")
        for param, m, v, g in ((layer.values, layer.adam_m, layer.adam_v, gw),
                               (layer.bias, layer.bias_m, layer.bias_v, gb)):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            param -= learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)

    net.step_count = t
    return net


# ---------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------
def save_checkpoint(net: Network, path, config: Optional[dict] = None) -> Path:
    """Write the network to a versioned .npz archive."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "n_layers": np.array(net.n_layers),
        "hidden_activation": np.array(net.hidden_activation),
        "sparsity": np.array(net.sparsity),
        "step_count": np.array(net.step_count),
        "config": np.array(json.dumps(config or {}, sort_keys=True)),
    }
    for i, layer in enumerate(net.layers):
        arrays[f"layer{i}_shape"] = np.array([layer.n_in, layer.n_out])
        for name in ("rows", "cols", "values", "bias", "adam_m", "adam_v", "bias_m", "bias_v"):
            arrays[f"layer{i}_{name}"] = getattr(layer, name)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    logger.info("Checkpoint written to %s", path)
    return path


def load_checkpoint(path) -> Tuple[Network, dict]:
    """Read a checkpoint written by save_checkpoint; returns (network, config snapshot)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        layers = []
        for i in range(int(data["n_layers"])):
            n_in, n_out = (int(x) for x in data[f"layer{i}_shape"])
            layer = SparseLayer(
                n_in=n_in, n_out=n_out,
                **{name: data[f"layer{i}_{name}"].copy()
                   for name in ("rows", "cols", "values", "bias", "adam_m", "adam_v", "bias_m", "bias_v")},
            )
            layer.validate()
            layers.append(layer)
        net = Network(layers, hidden_activation=str(data["hidden_activation"]),
                      sparsity=float(data["sparsity"]), step_count=int(data["step_count"]))
        config = json.loads(str(data["config"]))
    return net, config
