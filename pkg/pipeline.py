"""
Module: pipeline
Train -> accumulate importance -> select top K -> evaluate, with early
stopping and the (sparsity, L2) grid chosen on validation loss.
"""

import hashlib
import json
import logging
import math
import numbers
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data_fetcher import Dataset, fetch_dataset, generate_synthetic, prepare
from dst_engine import DstConfig, Strategy, TopologyLog, topology_step
from errors import ConfigError, NumericError
from evaluation import EvalConfig, coverage, evaluate_subset
from flops import FlopsReport, estimate_flops
from importance import (
    AccumulationMode, ImportanceAccumulator, Metric,
    accumulate, attribution_batch, neuron_strength, select_top_k,
)
from ranking_engine import METHODS
from sparse_net import (
    DEFAULT_HIDDEN_SIZES, Network, TrainConfig,
    adam_step, backward, cross_entropy, forward, init_network,
)

logger = logging.getLogger(__name__)

__version__ = "1.0.0"

MODELS = ("Dense", "SET", "RigL")
DEFAULT_SPARSITY_GRID = (0.25, 0.5, 0.80, 0.9, 0.95, 0.98)
DEFAULT_L2_GRID = (5e-5, 1e-4, 1e-3)
DEFAULT_K_VALUES = (25, 50, 75, 100, 200)
DEFAULT_SAMPLE_SIZES = (100, 500, 1000, 10000)

# Expected JSON kind of each config key; "?" marks keys that may be null.
FIELD_KINDS = {
    "dataset": "str", "label_column": "str", "method": "str", "metric": "str", "mode": "str",
    "output_dir": "str?", "K": "int", "max_epochs": "int", "patience": "int", "n_jobs": "int",
    "batch_size": "int?", "data_seed": "int?", "learning_rate": "float", "zeta": "float",
    "sparsity_grid": "float_list", "l2_grid": "float_list", "seeds": "int_list",
    "hidden_sizes": "int_list", "sample_sizes": "int_list", "k_values": "int_list",
    "heatmap_shape": "int_list?", "methods": "str_list",
}


def _is_kind(value, kind: str) -> bool:
    if kind == "str":
        return isinstance(value, str)
    if isinstance(value, bool):
        return False
    if kind == "int":
        return isinstance(value, numbers.Integral)
    if kind == "float":
        return isinstance(value, numbers.Real)
    item = kind[:-len("_list")]
    return isinstance(value, (list, tuple)) and all(_is_kind(v, item) for v in value)


def _describe(kind: str) -> str:
    return f"a list of {kind[:-5]}" if kind.endswith("_list") else f"a {kind}"


def check_field_types(values: dict) -> None:
    """Raises ConfigError for any config value whose JSON type does not fit its key."""
    for name, kind in FIELD_KINDS.items():
        if name not in values:
            continue
        value = values[name]
        if kind.endswith("?"):
            if value is None:
                continue
            kind = kind[:-1]
        if not _is_kind(value, kind):
            raise ConfigError(f"config key '{name}' expects {_describe(kind)}, got {value!r}")


def parse_method(method: str, metric: Optional[str] = None) -> Tuple[str, Metric]:
    """'SET-Attr' or ('SET', 'Attr') -> ('SET', Metric.ATTRIBUTION)."""
    name = str(method).strip()
    if "-" in name:
        name, metric = name.split("-", 1)
    for model in MODELS:
        if model.lower() == name.lower():
            return model, Metric.parse(metric if metric is not None else "Attr")
    raise ConfigError(f"unknown method '{method}', expected one of {MODELS} or {METHODS}")


# ---------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------
@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment; mirrors the flat config file."""

    dataset: str = "synthetic:1000"
    label_column: str = "label"
    method: str = "SET"
    metric: str = "Attr"
    mode: str = AccumulationMode.ALL_EPOCHS.value
    K: int = 100
    sparsity_grid: List[float] = field(default_factory=lambda: list(DEFAULT_SPARSITY_GRID))
    l2_grid: List[float] = field(default_factory=lambda: list(DEFAULT_L2_GRID))
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: Optional[str] = None
    max_epochs: int = 200
    patience: int = 50
    learning_rate: float = 0.001
    batch_size: Optional[int] = None
    hidden_sizes: List[int] = field(default_factory=lambda: list(DEFAULT_HIDDEN_SIZES))
    zeta: float = 0.3
    data_seed: Optional[int] = None
    n_jobs: int = 1
    heatmap_shape: Optional[List[int]] = None
    sample_sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SAMPLE_SIZES))
    k_values: List[int] = field(default_factory=lambda: list(DEFAULT_K_VALUES))
    methods: List[str] = field(default_factory=lambda: list(METHODS))

    def __post_init__(self):
        if "-" in str(self.method):
            model, metric = parse_method(self.method)
            self.method, self.metric = model, metric.value

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a flat key-value object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        updates = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **updates).validate()

    @property
    def model(self) -> str:
        return parse_method(self.method, self.metric)[0]

    @property
    def importance_metric(self) -> Metric:
        return parse_method(self.method, self.metric)[1]

    @property
    def baseline(self) -> str:
        return f"{self.model}-{self.importance_metric.value}"

    @property
    def strategy(self) -> Strategy:
        return Strategy.NONE if self.model == "Dense" else Strategy.parse(self.model)

    @property
    def accumulation_mode(self) -> AccumulationMode:
        return AccumulationMode.parse(self.mode)

    @property
    def first_seed(self) -> int:
        return int(self.seeds[0])

    @property
    def effective_data_seed(self) -> int:
        return self.first_seed if self.data_seed is None else int(self.data_seed)

    def grid_cells(self) -> List[Tuple[float, float]]:
        """Canonically ordered (P, l2) cells; Dense runs fix P = 0."""
        sparsities = [0.0] if self.model == "Dense" else sorted({float(p) for p in self.sparsity_grid})
        return [(p, l2) for p in sparsities for l2 in sorted({float(v) for v in self.l2_grid})]

    def validate(self) -> "ExperimentConfig":
        check_field_types(asdict(self))
        parse_method(self.method, self.metric)
        AccumulationMode.parse(self.mode)
        if int(self.K) < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if not self.sparsity_grid or not self.l2_grid:
            raise ConfigError("sparsity_grid and l2_grid must be non-empty")
        if any(not 0.0 <= float(p) < 1.0 for p in self.sparsity_grid):
            raise ConfigError(f"sparsity levels must lie in [0, 1): {self.sparsity_grid}")
        if any(float(v) < 0 for v in self.l2_grid):
            raise ConfigError(f"l2 values must be non-negative: {self.l2_grid}")
        if not self.seeds or any(int(s) < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if not 0.0 < self.zeta < 1.0:
            raise ConfigError(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.heatmap_shape is not None and len(self.heatmap_shape) != 2:
            raise ConfigError("heatmap_shape must be [height, width]")
        for name in self.methods:
            parse_method(name)
        self.train_config(n_samples=1000, l2=0.0).validate()
        return self

    def train_config(self, n_samples: int, l2: float, seed: int = 0) -> TrainConfig:
        return TrainConfig.for_dataset(
            n_samples, learning_rate=self.learning_rate, l2=l2, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, seed=seed,
        )

    def dst_config(self, sparsity: float) -> DstConfig:
        if self.model == "Dense":
            return DstConfig(zeta=self.zeta, strategy=Strategy.NONE, sparsity=0.0)
        return DstConfig(zeta=self.zeta, strategy=self.strategy, sparsity=sparsity)

    def snapshot(self) -> dict:
        return json.loads(json.dumps(asdict(self), sort_keys=True))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.snapshot(), sort_keys=True).encode()).hexdigest()


@dataclass
class TrainingOutcome:
    network: Network
    best_network: Network
    accumulator: ImportanceAccumulator
    epochs_run: int
    best_val_loss: float
    best_epoch: int
    history: pd.DataFrame
    topology_log: TopologyLog
    n_train: int


@dataclass
class ExperimentResult:
    """Chosen cell, per-seed selections and accuracies, FLOPs and the config snapshot."""

    baseline: str
    dataset: str
    sparsity: float
    l2: float
    K: int
    seeds: List[int]
    selected: Dict[int, List[int]]
    scores: Dict[int, np.ndarray]
    accuracies: List[float]
    epochs_run: List[int]
    flops: List[FlopsReport]
    grid_losses: Dict[Tuple[float, float], float]
    config: dict
    outcomes: Dict[int, TrainingOutcome] = field(default_factory=dict, repr=False)

    @property
    def accuracy_mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def accuracy_std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    @property
    def flops_mean(self) -> float:
        return float(np.mean([f.train_total for f in self.flops]))

    def table_cell(self) -> str:
        """'96.24±0.12 (0.5)': accuracy in percent with the chosen sparsity."""
        return f"{self.accuracy_mean * 100:.2f}±{self.accuracy_std * 100:.2f} ({self.sparsity:g})"

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "dataset": self.dataset,
            "sparsity": self.sparsity,
            "l2": self.l2,
            "K": self.K,
            "seeds": list(self.seeds),
            "selected": {str(s): v for s, v in self.selected.items()},
            "accuracies": self.accuracies,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "epochs_run": self.epochs_run,
            "flops": [f.to_dict() for f in self.flops],
            "grid_losses": [{"sparsity": p, "l2": l2, "best_val_loss": loss if math.isfinite(loss) else None}
                            for (p, l2), loss in sorted(self.grid_losses.items())],
            "config": self.config,
        }

    def results_rows(self) -> pd.DataFrame:
        """One row per seed: method, dataset, seed, accuracy, sparsity, K, flops."""
        return pd.DataFrame({
            "method": self.baseline,
            "dataset": self.dataset,
            "seed": list(self.seeds),
            "accuracy": self.accuracies,
            "sparsity": self.sparsity,
            "l2": self.l2,
            "K": self.K,
            "epochs_run": self.epochs_run,
            "flops": [f.train_total for f in self.flops],
        })


# ---------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------
def train_with_importance(net: Network, ds: Dataset, train_cfg: TrainConfig, dst_cfg: DstConfig,
                          metric, mode, seed: int) -> TrainingOutcome:
    """
    Train `net` in place while accumulating feature importance.

    Per iteration: forward, backward, Adam; attribution on the same minibatch
    (reusing its forward pass) when metric is Attr. Per epoch: neuron
    strength of the post-epoch network when metric is QS, then a topology
    update, then validation. Stops at max_epochs or after `patience`
    non-improving epochs; the best-validation network is kept aside.
    """
    train_cfg.validate()
    dst_cfg.validate()
    metric = Metric.parse(metric)
    X_tr, y_tr = ds.part("train")
    X_val, y_val = ds.part("val")
    n_train = X_tr.shape[0]
    bs = train_cfg.batch_size

    rng = np.random.default_rng(seed)
    acc = ImportanceAccumulator(ds.n_features, mode=mode)
    log = TopologyLog()
    best_loss, best_epoch, best_net = math.inf, 0, net.copy()
    bad_epochs = 0
    history = []

    epoch = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        losses = []
        last_batch = None
        iteration = 0
        for iteration, start in enumerate(range(0, n_train, bs)):
            idx = order[start:start + bs]
            Xb, yb = X_tr[idx], y_tr[idx]
            cache = forward(net, Xb)
            grads = backward(net, Xb, yb, l2=train_cfg.l2, cache=cache)
            if not math.isfinite(grads.loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, iteration {iteration}")
            if metric is Metric.ATTRIBUTION:
                accumulate(acc, attribution_batch(net, Xb, cache), epoch, iteration)
            adam_step(net, grads, learning_rate=train_cfg.learning_rate)
            losses.append(grads.loss)
            last_batch = (Xb, yb)

        if metric is Metric.STRENGTH:
            acc.add(neuron_strength(net), epoch, iteration)
        topology_step(net, dst_cfg, last_batch, seed, epoch=epoch, log=log, l2=train_cfg.l2)

        val_cache = forward(net, X_val)
        val_loss = cross_entropy(val_cache.logits, y_val)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        val_acc = float(np.mean(val_cache.probabilities.argmax(axis=1) == y_val))
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": val_loss, "val_accuracy": val_acc,
                        "active_weights": int(sum(net.active_counts()))})

        if val_loss < best_loss:
            best_loss, best_epoch, best_net = val_loss, epoch, net.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if epoch % train_cfg.log_every == 0:
            logger.info("epoch %d: train loss %.5f, val loss %.5f, val acc %.4f",
                        epoch, history[-1]["train_loss"], val_loss, val_acc)
        if bad_epochs >= train_cfg.patience:
            logger.info("Early stop at epoch %d (best val loss %.5f at epoch %d)",
                        epoch, best_loss, best_epoch)
            break

    return TrainingOutcome(
        network=net, best_network=best_net, accumulator=acc, epochs_run=epoch,
        best_val_loss=best_loss, best_epoch=best_epoch, history=pd.DataFrame(history),
        topology_log=log, n_train=n_train,
    )


def train_cell(cfg: ExperimentConfig, ds: Dataset, sparsity: float, l2: float, seed: int) -> TrainingOutcome:
    """Fresh network for one (P, l2, seed) job."""
    dst_cfg = cfg.dst_config(sparsity)
    net = init_network(ds.n_features, ds.n_classes, dst_cfg.sparsity, seed, hidden_sizes=cfg.hidden_sizes)
    train_cfg = cfg.train_config(ds.n_samples, l2, seed)
    logger.debug("Training %s at P=%g, l2=%g, seed %d", cfg.baseline, dst_cfg.sparsity, l2, seed)
    return train_with_importance(net, ds, train_cfg, dst_cfg, cfg.importance_metric,
                                 cfg.accumulation_mode, seed)


def _grid_job(args) -> Tuple[Tuple[float, float, int], Optional[TrainingOutcome], float]:
    cfg, ds, sparsity, l2, seed = args
    try:
        outcome = train_cell(cfg, ds, sparsity, l2, seed)
        return (sparsity, l2, seed), outcome, outcome.best_val_loss
    except NumericError as exc:
        logger.warning("Cell P=%g l2=%g seed %d diverged: %s", sparsity, l2, seed, exc)
        return (sparsity, l2, seed), None, math.inf


def _run_jobs(cfg: ExperimentConfig, ds: Dataset, jobs: Sequence[Tuple[float, float, int]]):
    payload = [(cfg, ds, p, l2, s) for p, l2, s in jobs]
    if cfg.n_jobs > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            return list(pool.map(_grid_job, payload))
    return [_grid_job(item) for item in payload]


def load_prepared(cfg: ExperimentConfig) -> Dataset:
    ds = fetch_dataset(cfg.dataset, cfg.label_column, seed=cfg.effective_data_seed)
    return prepare(ds, cfg.effective_data_seed)


def _check_k(cfg: ExperimentConfig, ds: Dataset) -> None:
    if not 1 <= cfg.K <= ds.n_features:
        raise ConfigError(f"K must lie in [1, {ds.n_features}], got {cfg.K}")


def _finish(cfg: ExperimentConfig, ds: Dataset, sparsity: float, l2: float,
            outcomes: Dict[int, TrainingOutcome], grid_losses) -> ExperimentResult:
    eval_cfg = EvalConfig(K=cfg.K, repeats=len(cfg.seeds))
    selected, scores, accuracies, epochs, reports = {}, {}, [], [], []
    for seed in cfg.seeds:
        outcome = outcomes[seed]
        s = outcome.accumulator.scores
        scores[seed] = s
        selected[seed] = select_top_k(s, cfg.K)
        accuracies.append(evaluate_subset(ds, selected[seed], eval_cfg, seed))
        epochs.append(outcome.epochs_run)
        reports.append(estimate_flops(outcome.network.shape, cfg.dst_config(sparsity).sparsity,
                                      outcome.epochs_run, outcome.n_train, cfg.strategy,
                                      cfg.importance_metric.value))
    return ExperimentResult(
        baseline=cfg.baseline, dataset=ds.name, sparsity=sparsity, l2=l2, K=cfg.K,
        seeds=[int(s) for s in cfg.seeds], selected=selected, scores=scores,
        accuracies=accuracies, epochs_run=epochs, flops=reports,
        grid_losses=dict(grid_losses), config=cfg.snapshot(), outcomes=outcomes,
    )


def run_seeds(cfg: ExperimentConfig, ds: Dataset, sparsity: float, l2: float,
              cached: Optional[Dict[int, TrainingOutcome]] = None) -> Dict[int, TrainingOutcome]:
    """Train every seed of one cell, reusing already trained seeds."""
    outcomes = dict(cached or {})
    todo = [(sparsity, l2, int(s)) for s in cfg.seeds if int(s) not in outcomes]
    for (_, _, seed), outcome, _ in _run_jobs(cfg, ds, todo):
        if outcome is None:
            raise NumericError(f"{cfg.baseline} diverged at P={sparsity:g}, l2={l2:g}, seed {seed}")
        outcomes[seed] = outcome
    return outcomes


def run_grid(cfg: ExperimentConfig, ds: Optional[Dataset] = None) -> ExperimentResult:
    """
    Pick (P, l2) by the first seed's best validation loss, then train and
    evaluate the winning cell over every seed. Divergent cells score +inf;
    ties go to the first cell in canonical (P, l2) order.
    """
    cfg.validate()
    ds = ds if ds is not None else load_prepared(cfg)
    _check_k(cfg, ds)
    cells = cfg.grid_cells()
    first = cfg.first_seed

    grid_losses, first_outcomes = {}, {}
    for (p, l2, _), outcome, loss in _run_jobs(cfg, ds, [(p, l2, first) for p, l2 in cells]):
        grid_losses[(p, l2)] = loss
        first_outcomes[(p, l2)] = outcome
        logger.debug("Grid cell P=%g l2=%g: best val loss %.6f", p, l2, loss)

    winner = min(cells, key=lambda c: (grid_losses[c], c))
    if not math.isfinite(grid_losses[winner]):
        raise NumericError(f"every grid cell of {cfg.baseline} diverged")
    logger.info("%s on %s: chose P=%g, l2=%g (val loss %.5f)",
                cfg.baseline, ds.name, winner[0], winner[1], grid_losses[winner])

    outcomes = run_seeds(cfg, ds, *winner, cached={first: first_outcomes[winner]})
    return _finish(cfg, ds, winner[0], winner[1], outcomes, grid_losses)


def run_sparsity_sweep(cfg: ExperimentConfig, l2: float, ds: Optional[Dataset] = None) -> pd.DataFrame:
    """Accuracy and FLOPs for every P of the grid at a fixed l2, no validation-based choice."""
    cfg.validate()
    ds = ds if ds is not None else load_prepared(cfg)
    _check_k(cfg, ds)
    rows = []
    for p in sorted({p for p, _ in cfg.grid_cells()}):
        result = _finish(cfg, ds, p, l2, run_seeds(cfg, ds, p, l2), {})
        rows.append({
            "method": result.baseline, "dataset": ds.name, "sparsity": p, "l2": l2, "K": cfg.K,
            "accuracy_mean": result.accuracy_mean, "accuracy_std": result.accuracy_std,
            "epochs_run_mean": float(np.mean(result.epochs_run)), "flops": result.flops_mean,
        })
    return pd.DataFrame(rows)


def run_accumulation_ablation(cfg: ExperimentConfig, sparsity: float, l2: float,
                              ds: Optional[Dataset] = None) -> pd.DataFrame:
    """
    Rankings of the three accumulation modes from one training run per seed:
    one row per (seed, mode) with the selection and its accuracy.
    """
    cfg.validate()
    ds = ds if ds is not None else load_prepared(cfg)
    _check_k(cfg, ds)
    eval_cfg = EvalConfig(K=cfg.K, repeats=len(cfg.seeds))
    rows = []
    for seed, outcome in sorted(run_seeds(cfg, ds, sparsity, l2).items()):
        for mode in AccumulationMode:
            selected = select_top_k(outcome.accumulator.scores_for(mode), cfg.K)
            rows.append({
                "method": cfg.baseline, "dataset": ds.name, "seed": seed, "mode": mode.value,
                "accuracy": evaluate_subset(ds, selected, eval_cfg, seed),
                "selected": " ".join(str(j) for j in selected),
            })
    return pd.DataFrame(rows)


def run_k_ranking(results: Sequence[ExperimentResult], ds: Dataset,
                  k_values: Sequence[int] = DEFAULT_K_VALUES) -> pd.DataFrame:
    """
    Re-select top K for every K (clipped to d) from each result's stored
    scores and evaluate: long table (dataset, K, method, seed, accuracy).
    """
    rows = []
    for K in sorted({int(k) for k in k_values if 1 <= int(k) <= ds.n_features}):
        eval_cfg = EvalConfig(K=K)
        for result in results:
            for seed in result.seeds:
                features = select_top_k(result.scores[seed], K)
                rows.append({"dataset": ds.name, "K": K, "method": result.baseline, "seed": seed,
                             "accuracy": evaluate_subset(ds, features, eval_cfg, seed)})
    return pd.DataFrame(rows, columns=["dataset", "K", "method", "seed", "accuracy"])


def run_coverage_benchmark(cfg: ExperimentConfig) -> Tuple[pd.DataFrame, pd.DataFrame, List[ExperimentResult]]:
    """
    Synthetic benchmark over cfg.methods x cfg.sample_sizes x cfg.seeds.

    Returns the coverage rows (method, n_samples, seed, coverage), the
    per-seed results rows and the experiment results themselves.
    """
    cfg.validate()
    coverage_rows, result_frames, results = [], [], []
    for n in cfg.sample_sizes:
        ds = prepare(generate_synthetic(int(n), seed=cfg.effective_data_seed), cfg.effective_data_seed)
        for name in cfg.methods:
            model, metric = parse_method(name)
            run_cfg = replace(cfg, dataset=f"synthetic:{n}", method=model, metric=metric.value)
            result = run_grid(run_cfg, ds)
            results.append(result)
            result_frames.append(result.results_rows())
            for seed in result.seeds:
                coverage_rows.append({
                    "method": result.baseline, "n_samples": int(n), "seed": seed,
                    "coverage": coverage(result.selected[seed], ds.informative),
                })
            logger.info("%s, n=%d: mean coverage %.3f", result.baseline, n,
                        np.mean([r["coverage"] for r in coverage_rows[-len(result.seeds):]]))
    return pd.DataFrame(coverage_rows), pd.concat(result_frames, ignore_index=True), results


def coverage_curve(coverage_rows: pd.DataFrame) -> pd.DataFrame:
    """Mean and std coverage per (method, n_samples)."""
    return (coverage_rows.groupby(["method", "n_samples"], sort=True)["coverage"]
            .agg(["mean", "std"]).reset_index())
