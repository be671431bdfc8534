"""
Feature-importance metrics for sparse networks.

- neuron strength: sum of absolute first-layer weights leaving a feature
- neuron attribution: |d logit_i / d x_j| averaged over a batch, then summed
  over output neurons
- an accumulator that sums per-iteration scores over the whole run, over the
  last epoch, or keeps the last iteration only
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ConfigError, DataError
from sparse_net import ForwardCache, Network, forward, input_gradient

logger = logging.getLogger(__name__)

# C x d matrix: mean |d logit_i / d x_j| over a batch
AttributionMatrix = np.ndarray


class AccumulationMode(str, Enum):
    ALL_EPOCHS = "all_epochs"
    LAST_EPOCH = "last_epoch"
    LAST_ITERATION = "last_iteration"

    @classmethod
    def parse(cls, name: Union[str, "AccumulationMode"]) -> "AccumulationMode":
        if isinstance(name, AccumulationMode):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"allepochs": cls.ALL_EPOCHS, "lastepoch": cls.LAST_EPOCH,
                   "lastiteration": cls.LAST_ITERATION}
        for member in cls:
            if member.value == key:
                return member
        if key.replace("_", "") in aliases:
            return aliases[key.replace("_", "")]
        raise ConfigError(f"unknown accumulation mode '{name}'")


class Metric(str, Enum):
    STRENGTH = "QS"
    ATTRIBUTION = "Attr"

    @classmethod
    def parse(cls, name: Union[str, "Metric"]) -> "Metric":
        if isinstance(name, Metric):
            return name
        key = str(name).strip().lower()
        if key in ("qs", "strength", "neuron_strength"):
            return cls.STRENGTH
        if key in ("attr", "attribution", "neuron_attribution"):
            return cls.ATTRIBUTION
        raise ConfigError(f"unknown importance metric '{name}', expected QS or Attr")


@dataclass
class ImportanceAccumulator:
    """
    Running per-feature scores.

    The whole-run sum, the current epoch's sum and the last contribution are
    all tracked; `mode` decides which one `scores` reports. Closed epochs are
    kept as snapshots so the modes can be compared after a single run.
    """

    n_features: int
    mode: AccumulationMode = AccumulationMode.ALL_EPOCHS
    total: np.ndarray = None
    epoch_sum: np.ndarray = None
    last: np.ndarray = None
    current_epoch: Optional[int] = None
    last_iteration: Optional[int] = None
    iterations_seen: int = 0
    epoch_snapshots: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.mode = AccumulationMode.parse(self.mode)
        for name in ("total", "epoch_sum", "last"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.n_features))

    def add(self, contribution: np.ndarray, epoch: int, iteration: Optional[int] = None) -> None:
        c = np.asarray(contribution, dtype=np.float64)
        if c.shape != (self.n_features,):
            raise DataError(f"contribution has shape {c.shape}, expected ({self.n_features},)")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise DataError("importance contributions must be finite and non-negative")
        if self.current_epoch is None or epoch != self.current_epoch:
            self._start_epoch(epoch)
        self.total += c
        self.epoch_sum += c
        self.last = c.copy()
        self.last_iteration = iteration
        self.iterations_seen += 1

    def _start_epoch(self, epoch: int) -> None:
        if self.current_epoch is not None:
            self.epoch_snapshots.append(self.epoch_sum.copy())
        self.epoch_sum = np.zeros(self.n_features)
        self.current_epoch = epoch

    def snapshots(self) -> List[np.ndarray]:
        """Per-epoch sums, the running epoch included."""
        if self.current_epoch is None:
            return []
        return [*self.epoch_snapshots, self.epoch_sum.copy()]

    def scores_for(self, mode: Union[str, AccumulationMode]) -> np.ndarray:
        mode = AccumulationMode.parse(mode)
        if mode is AccumulationMode.ALL_EPOCHS:
            return self.total.copy()
        if mode is AccumulationMode.LAST_EPOCH:
            return self.epoch_sum.copy()
        return self.last.copy()

    @property
    def scores(self) -> np.ndarray:
        return self.scores_for(self.mode)


# ---------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------
def neuron_strength(net: Network) -> np.ndarray:
    """S(X_j) = sum of |W1_ji| over the active first-layer coordinates of feature j."""
    if net.n_layers < 1:
        raise DataError("network has no layers")
    first = net.layers[0]
    return np.bincount(first.rows, weights=np.abs(first.values), minlength=first.n_in)


def attribution_batch(net: Network, X: np.ndarray,
                      cache: Optional[ForwardCache] = None) -> AttributionMatrix:
    """
    Entry (i, j) = mean over the batch of |d logit_i(x) / d x_j|.

    One input-gradient pass per output neuron; a cache from the training
    forward pass on the same batch can be reused.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise DataError("attribution needs a non-empty batch")
    if cache is None:
        cache = forward(net, X)
    elif cache.inputs[0].shape != X.shape:
        raise DataError("forward cache does not belong to this batch")

    attr = np.empty((net.n_classes, net.n_features))
    for i in range(net.n_classes):
        seed = np.zeros_like(cache.logits)
        seed[:, i] = 1.0
        attr[i] = np.abs(input_gradient(net, cache, seed)).mean(axis=0)
    return attr


def accumulate(acc: ImportanceAccumulator, attr: AttributionMatrix, epoch: int,
               iteration: Optional[int] = None) -> ImportanceAccumulator:
    """Add one iteration's score s_itr[j] = sum_i attr[i, j]."""
    attr = np.asarray(attr, dtype=np.float64)
    if attr.ndim != 2 or attr.shape[1] != acc.n_features:
        raise DataError(f"attribution has shape {attr.shape}, accumulator tracks {acc.n_features} features")
    acc.add(attr.sum(axis=0), epoch, iteration)
    return acc


def select_top_k(scores: Sequence[float], K: int) -> List[int]:
    """Indices of the K largest scores, by descending score then ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    d = scores.shape[0]
    if not 1 <= K <= d:
        raise ConfigError(f"K must lie in [1, {d}], got {K}")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    order = np.lexsort((np.arange(d), -scores))
    return [int(j) for j in order[:K]]


# ---------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------
def scores_frame(scores: np.ndarray, metric: str, mode: str, epoch: int, seed: int,
                 feature_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    scores = np.asarray(scores, dtype=np.float64)
    ranking = select_top_k(scores, scores.shape[0])
    rank = np.empty(scores.shape[0], dtype=np.int64)
    rank[ranking] = np.arange(1, scores.shape[0] + 1)
    df = pd.DataFrame({"feature": np.arange(scores.shape[0]), "score": scores, "rank": rank})
    if feature_names is not None:
        df.insert(1, "name", list(feature_names))
    df["metric"] = metric
    df["mode"] = mode
    df["epoch"] = epoch
    df["seed"] = seed
    return df


def export_scores(scores: np.ndarray, path, metric: str, mode: str, epoch: int, seed: int,
                  feature_names: Optional[Sequence[str]] = None) -> Path:
    """Write per-feature scores with their metric, mode, epoch and seed as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scores_frame(scores, metric, mode, epoch, seed, feature_names).to_csv(
        path, index=False, float_format="%.17g")
    return path


def load_scores(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"scores file not found: {path}")
    df = pd.read_csv(path)
    if not {"feature", "score"} <= set(df.columns):
        raise DataError(f"{path} lacks 'feature'/'score' columns")
    return df.sort_values("feature")["score"].to_numpy(dtype=np.float64)


def scores_to_grid(scores: np.ndarray, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major (height, width) grid of raw scores and its 0..255 min-max graymap."""
    scores = np.asarray(scores, dtype=np.float64)
    if height < 1 or width < 1 or height * width != scores.shape[0]:
        raise DataError(f"cannot reshape {scores.shape[0]} scores to {height}x{width}")
    grid = scores.reshape(height, width)
    lo, hi = grid.min(), grid.max()
    if hi - lo <= 0:
        logger.warning("Constant scores: heatmap normalized to all zeros")
        gray = np.zeros_like(grid, dtype=np.uint8)
    else:
        gray = np.rint((grid - lo) / (hi - lo) * 255.0).astype(np.uint8)
    return grid, gray


def write_heatmap(scores: np.ndarray, height: int, width: int, pgm_path, grid_path) -> Tuple[Path, Path]:
    """Write the graymap as a plain (P2) PGM image plus the raw grid as CSV."""
    grid, gray = scores_to_grid(scores, height, width)
    pgm_path, grid_path = Path(pgm_path), Path(grid_path)
    pgm_path.parent.mkdir(parents=True, exist_ok=True)
    with open(pgm_path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{width} {height}\n255\n")
        for row in gray:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
    pd.DataFrame(grid).to_csv(grid_path, index=False, header=False, float_format="%.17g")
    logger.info("Heatmap written to %s (%dx%d)", pgm_path, height, width)
    return pgm_path, grid_path


def read_pgm(path) -> np.ndarray:
    """Parse a plain PGM written by write_heatmap."""
    tokens = Path(path).read_text(encoding="ascii").split()
    if not tokens or tokens[0] != "P2":
        raise DataError(f"{path} is not a plain PGM file")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    return pixels.reshape(height, width)
