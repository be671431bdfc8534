# flops.py
"""
Theoretical FLOPs and parameter counts for dense vs sparse training.

Convention (printed into every report):
- a multiply-add is 2 FLOPs, so a layer's forward pass costs 2 * nnz + n_out (bias)
- backward costs 2x forward (input-gradient pass + weight-gradient pass)
- activation/softmax costs n_out per layer, reported separately
- RigL's dense gradient costs 4 * n_in * n_out per layer per topology update,
  kept in dst_overhead
- attribution costs C input-gradient passes per training sample, kept apart
"""

from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from dst_engine import Strategy
from errors import ConfigError, DataError
from sparse_net import active_count

CONVENTION = (
    "2 FLOPs per multiply-add; forward = 2*nnz + n_out per layer; backward = 2x forward; "
    "activation/softmax = n_out per layer (separate); RigL dense gradient = 4*n_in*n_out per layer "
    "per update (dst_overhead); attribution = C input-gradient passes per sample (separate)"
)
DISPLAY_SCALE = 1e12

Shape = Union[Sequence[int], Sequence[Tuple[int, int]]]


@dataclass
class FlopsReport:
    forward_per_sample: int
    backward_per_sample: int
    activation_per_sample: int
    samples_processed: int
    train_total: int
    dst_overhead: int
    attribution_overhead: int
    strength_overhead: int
    convention: str = CONVENTION

    @property
    def grand_total(self) -> int:
        """Training cost with every separately reported term added."""
        return (self.train_total + self.attribution_overhead + self.strength_overhead
                + self.activation_per_sample * self.samples_processed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grand_total"] = self.grand_total
        return out


def layer_shapes(net_shape: Shape) -> List[Tuple[int, int]]:
    """Accept [d, h1, ..., C] or [(n_in, n_out), ...]."""
    shape = list(net_shape)
    if not shape:
        raise ConfigError("empty network shape")
    if all(isinstance(s, (tuple, list)) for s in shape):
        pairs = [(int(a), int(b)) for a, b in shape]
    else:
        dims = [int(s) for s in shape]
        if len(dims) < 2:
            raise ConfigError("a network shape needs at least input and output sizes")
        pairs = list(zip(dims, dims[1:]))
    if any(a < 1 or b < 1 for a, b in pairs):
        raise ConfigError(f"layer sizes must be positive: {pairs}")
    return pairs


def layer_forward_flops(n_in: int, n_out: int, P: float) -> int:
    return 2 * active_count(n_in, n_out, P) + n_out


def estimate_flops(net_shape: Shape, P: float, epochs_run: int, samples_per_epoch: int,
                   strategy: Union[str, Strategy, None] = Strategy.NONE,
                   metric: Optional[str] = None) -> FlopsReport:
    """Theoretical training FLOPs for `epochs_run` epochs over `samples_per_epoch` samples."""
    if not 0.0 <= P < 1.0:
        raise ConfigError(f"sparsity must lie in [0, 1), got {P}")
    if epochs_run < 0 or samples_per_epoch < 0:
        raise ConfigError("epochs_run and samples_per_epoch must be non-negative")
    strategy = Strategy.parse(strategy)
    pairs = layer_shapes(net_shape)

    fwd = sum(layer_forward_flops(a, b, P) for a, b in pairs)
    bwd = 2 * fwd
    act = sum(b for _, b in pairs)
    samples = epochs_run * samples_per_epoch

    dst = 0
    if strategy is Strategy.RIGL and P > 0:
        dst = epochs_run * sum(4 * a * b for a, b in pairs)

    attribution = strength = 0
    if metric is not None:
        key = str(metric).lower()
        if key in ("attr", "attribution"):
            attribution = pairs[-1][1] * fwd * samples
        elif key in ("qs", "strength"):
            a, b = pairs[0]
            strength = 2 * active_count(a, b, P) * epochs_run
        else:
            raise ConfigError(f"unknown metric '{metric}'")

    return FlopsReport(
        forward_per_sample=fwd,
        backward_per_sample=bwd,
        activation_per_sample=act,
        samples_processed=samples,
        train_total=(fwd + bwd) * samples + dst,
        dst_overhead=dst,
        attribution_overhead=attribution,
        strength_overhead=strength,
    )


def count_parameters(net_shape: Shape, P: float) -> Dict[str, float]:
    """Active weights plus biases at sparsity P and the saving against the dense network."""
    pairs = layer_shapes(net_shape)
    weights = sum(active_count(a, b, P) for a, b in pairs)
    dense_weights = sum(a * b for a, b in pairs)
    biases = sum(b for _, b in pairs)
    return {
        "weights": weights,
        "biases": biases,
        "total": weights + biases,
        "dense_total": dense_weights + biases,
        "memory_reduction": 1.0 - (weights + biases) / (dense_weights + biases),
    }


def emit_accuracy_vs_flops(results: pd.DataFrame) -> pd.DataFrame:
    """Plot-ready (method, dataset, accuracy, flops) rows; values pass through unchanged."""
    columns = ["method", "dataset", "accuracy", "flops"]
    if results is None or len(results) == 0:
        return pd.DataFrame(columns=columns)
    missing = set(columns) - set(results.columns)
    if missing:
        raise DataError(f"results lack fields {sorted(missing)}")
    if results[columns].isna().any().any():
        raise DataError("results contain empty accuracy or flops cells")
    return results[columns].reset_index(drop=True)
