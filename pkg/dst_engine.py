"""
Dynamic sparse training: topology evolution at constant sparsity.

Once per epoch every sparse layer drops the fraction zeta of its active
weights with the smallest magnitude and regrows the same number of inactive
positions, either uniformly at random (SET) or where the dense loss gradient
is largest (RigL). Regrown weights start at 0 with zeroed Adam moments.
"""

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from errors import ConfigError, DataError, NumericError
from sparse_net import Network, SparseLayer, dense_weight_gradients

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]


class Strategy(str, Enum):
    SET = "SET"
    RIGL = "RigL"
    NONE = "None"

    @classmethod
    def parse(cls, name: Union[str, "Strategy", None]) -> "Strategy":
        if isinstance(name, Strategy):
            return name
        key = str(name).strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        if key in ("", "dense", "static"):
            return cls.NONE
        raise ConfigError(f"unknown regrow strategy '{name}', expected SET, RigL or None")


@dataclass
class DstConfig:
    """Prune fraction, regrow strategy and sparsity of a sparse run."""

    zeta: float = 0.3
    strategy: Strategy = Strategy.SET
    sparsity: float = 0.5
    cadence: str = "epoch"

    SPARSITY_LEVELS = (0.0, 0.25, 0.5, 0.80, 0.9, 0.95, 0.98)

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)

    @classmethod
    def dense(cls) -> "DstConfig":
        return cls(strategy=Strategy.NONE, sparsity=0.0)

    @property
    def is_static(self) -> bool:
        return self.strategy is Strategy.NONE

    def validate(self) -> "DstConfig":
        if not 0.0 < self.zeta < 1.0:
            raise ConfigError(f"zeta must lie in (0, 1), got {self.zeta}")
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        if self.cadence != "epoch":
            raise ConfigError(f"unsupported topology cadence '{self.cadence}'")
        return self

    def snapshot(self) -> dict:
        snap = asdict(self)
        snap["strategy"] = self.strategy.value
        return snap


@dataclass
class TopologyEvent:
    epoch: int
    layer: int
    dropped: List[List[int]]
    added: List[List[int]]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TopologyLog:
    """Append-only record of topology updates plus the cost of RigL's dense gradient passes."""

    events: List[TopologyEvent] = field(default_factory=list)
    dense_gradient_passes: int = 0
    dense_gradient_flops: int = 0

    def append(self, event: TopologyEvent) -> None:
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def write_jsonl(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for event in self.events:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        return path

    @classmethod
    def read_jsonl(cls, path) -> "TopologyLog":
        log = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log.append(TopologyEvent(**json.loads(line)))
        return log


# ---------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------
def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _subset(layer: SparseLayer, keep: np.ndarray) -> SparseLayer:
    return SparseLayer(
        n_in=layer.n_in, n_out=layer.n_out,
        rows=layer.rows[keep], cols=layer.cols[keep], values=layer.values[keep],
        bias=layer.bias.copy(), adam_m=layer.adam_m[keep], adam_v=layer.adam_v[keep],
        bias_m=layer.bias_m.copy(), bias_v=layer.bias_v.copy(),
    )


def _insert(layer: SparseLayer, new_flat: np.ndarray) -> SparseLayer:
    """Activate new positions at value 0 with zero moments, keeping coords sorted."""
    new_flat = np.asarray(new_flat, dtype=np.int64)
    zeros = np.zeros(new_flat.shape[0])
    flat = np.concatenate([layer.flat_index, new_flat])
    order = np.argsort(flat, kind="stable")
    flat = flat[order]
    grown = SparseLayer(
        n_in=layer.n_in, n_out=layer.n_out,
        rows=flat // layer.n_out, cols=flat % layer.n_out,
        values=np.concatenate([layer.values, zeros])[order],
        bias=layer.bias.copy(),
        adam_m=np.concatenate([layer.adam_m, zeros])[order],
        adam_v=np.concatenate([layer.adam_v, zeros])[order],
        bias_m=layer.bias_m.copy(), bias_v=layer.bias_v.copy(),
    )
    grown.validate()
    return grown


def _check_capacity(layer: SparseLayer, k: int) -> np.ndarray:
    if k < 0:
        raise ConfigError(f"regrow count must be >= 0, got {k}")
    inactive = layer.inactive_flat()
    if k > inactive.shape[0]:
        raise NumericError(
            f"cannot regrow {k} weights in a {layer.n_in}x{layer.n_out} layer "
            f"with only {inactive.shape[0]} inactive positions"
        )
    return inactive


# ---------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------
def prune_magnitude(layer: SparseLayer, zeta: float) -> Tuple[SparseLayer, np.ndarray]:
    """
    Drop floor(zeta * nnz) smallest-magnitude weights.

    Returns the pruned layer and the dropped (row, col) coordinates; ties are
    broken by ascending (row, col). Survivors keep values and Adam moments.
    """
    if not 0.0 < zeta < 1.0:
        raise ConfigError(f"zeta must lie in (0, 1), got {zeta}")
    if layer.nnz < 1:
        raise DataError("cannot prune a layer without active weights")

    k = int(math.floor(zeta * layer.nnz + 1e-9))
    # coords are stored in (row, col) order, so a stable sort breaks ties by position
    order = np.argsort(np.abs(layer.values), kind="stable")
    drop = np.sort(order[:k])
    keep = np.sort(order[k:])
    return _subset(layer, keep), layer.coords()[drop]


def regrow_random(layer: SparseLayer, k: int, seed: SeedLike) -> SparseLayer:
    """SET regrowth: k inactive positions chosen uniformly at random."""
    inactive = _check_capacity(layer, k)
    if k == 0:
        return layer.copy()
    chosen = _rng(seed).choice(inactive, size=k, replace=False)
    return _insert(layer, chosen)


def regrow_gradient(layer: SparseLayer, k: int, dense_grad: np.ndarray) -> SparseLayer:
    """RigL regrowth: the k inactive positions with the largest |dense gradient|."""
    dense_grad = np.asarray(dense_grad, dtype=np.float64)
    if dense_grad.shape != (layer.n_in, layer.n_out):
        raise DataError(f"dense gradient has shape {dense_grad.shape}, "
                        f"layer is {layer.n_in}x{layer.n_out}")
    inactive = _check_capacity(layer, k)
    if k == 0:
        return layer.copy()
    scores = np.abs(dense_grad.ravel()[inactive])
    # inactive is ascending, so the stable sort breaks ties by (row, col)
    chosen = inactive[np.argsort(-scores, kind="stable")[:k]]
    return _insert(layer, chosen)


def topology_step(net: Network, config: DstConfig,
                  batch_for_grad: Optional[Tuple[np.ndarray, np.ndarray]],
                  seed: int, epoch: int = 0, log: Optional[TopologyLog] = None,
                  l2: float = 0.0) -> Network:
    """
    Prune then regrow every sparse layer of `net` in place.

    batch_for_grad is the (X, y) batch whose dense gradient drives RigL; SET
    ignores it. Dense layers and static configurations are left untouched.
    """
    if config.is_static or all(layer.nnz == layer.size for layer in net.layers):
        return net

    dense_grads = None
    if config.strategy is Strategy.RIGL:
        if batch_for_grad is None:
            raise ConfigError("RigL topology updates need a batch for the dense gradient")
        X, y = batch_for_grad
        dense_grads = dense_weight_gradients(net, X, y, l2=l2)
        if log is not None:
            log.dense_gradient_passes += 1
            log.dense_gradient_flops += sum(4 * layer.size for layer in net.layers)

    for idx, layer in enumerate(net.layers):
        if layer.nnz == layer.size:
            continue
        before = layer.nnz
        pruned, dropped = prune_magnitude(layer, config.zeta)
        k = dropped.shape[0]
        if config.strategy is Strategy.RIGL:
            grown = regrow_gradient(pruned, k, dense_grads[idx])
        else:
            grown = regrow_random(pruned, k, np.random.default_rng([seed, epoch, idx]))
        if grown.nnz != before:
            raise NumericError(f"layer {idx}: active count changed from {before} to {grown.nnz}")

        added_flat = np.setdiff1d(grown.flat_index, pruned.flat_index, assume_unique=True)
        added = np.column_stack([added_flat // layer.n_out, added_flat % layer.n_out])
        net.layers[idx] = grown
        if log is not None:
            log.append(TopologyEvent(epoch=int(epoch), layer=idx,
                                     dropped=dropped.tolist(), added=added.tolist()))
        logger.debug("epoch %d layer %d: dropped %d, regrew %d (%s)",
                     epoch, idx, k, added.shape[0], config.strategy.value)
    return net
