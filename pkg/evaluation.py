"""
Module: evaluation
Downstream quality of a selected feature subset: a linear max-margin
classifier trained on the subset, plus the coverage of known informative
features.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from sklearn.linear_model import SGDClassifier
from sklearn.metrics import accuracy_score

from data_fetcher import Dataset
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass
class EvalConfig:
    """One-vs-rest linear SVM trained by SGD on hinge loss + L2."""

    learning_rate: float = 0.01
    alpha: float = 1e-4
    epochs: int = 100
    repeats: int = 5
    K: int = 100

    def validate(self) -> "EvalConfig":
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.learning_rate <= 0 or self.alpha < 0 or self.epochs < 1:
            raise ConfigError("classifier learning_rate/epochs must be positive and alpha non-negative")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        return self

    def classifier(self, seed: int) -> SGDClassifier:
        return SGDClassifier(
            loss="hinge", penalty="l2", alpha=self.alpha,
            learning_rate="constant", eta0=self.learning_rate,
            max_iter=self.epochs, tol=None, shuffle=True, random_state=seed,
        )

    def snapshot(self) -> dict:
        return asdict(self)


def _check_features(ds: Dataset, features: Sequence[int]) -> np.ndarray:
    features = np.asarray(list(features), dtype=np.int64)
    if features.size == 0:
        raise DataError("cannot evaluate an empty feature set")
    if features.min() < 0 or features.max() >= ds.n_features:
        raise DataError(f"feature index out of range [0, {ds.n_features})")
    if np.unique(features).size != features.size:
        raise DataError("feature list contains duplicate indices")
    return features


def evaluate_subset(ds: Dataset, features: Sequence[int], cfg: EvalConfig, seed: int) -> float:
    """Test accuracy of the classifier fit on the train split restricted to `features`."""
    features = _check_features(ds, features)
    X_train, y_train = ds.part("train")
    X_test, y_test = ds.part("test")
    if np.unique(y_train).size < 2:
        raise DataError("train split holds a single class")

    clf = cfg.classifier(seed)
    clf.fit(X_train[:, features], y_train)
    acc = float(accuracy_score(y_test, clf.predict(X_test[:, features])))
    logger.debug("Evaluated %d features with seed %d: accuracy %.4f", features.size, seed, acc)
    return acc


def evaluate_repeats(ds: Dataset, features: Sequence[int], cfg: EvalConfig,
                     seeds: Iterable[int]) -> Tuple[float, float, List[float]]:
    """Mean and sample std of test accuracy over classifier seeds."""
    accs = [evaluate_subset(ds, features, cfg, s) for s in seeds]
    if not accs:
        raise ConfigError("need at least one evaluation seed")
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return float(np.mean(accs)), std, accs


def coverage(selected: Sequence[int], informative: Sequence[int]) -> float:
    """|selected ∩ informative| / min(|selected|, |informative|)."""
    selected, informative = set(int(j) for j in selected), set(int(j) for j in informative)
    if not selected or not informative:
        raise DataError("coverage needs non-empty selected and informative sets")
    return len(selected & informative) / min(len(selected), len(informative))


def random_subset_baseline(ds: Dataset, K: int, cfg: EvalConfig, seeds: Iterable[int]) -> Tuple[float, float]:
    """Accuracy of K uniformly random features, one draw and one classifier fit per seed."""
    if not 1 <= K <= ds.n_features:
        raise ConfigError(f"K must lie in [1, {ds.n_features}], got {K}")
    accs = []
    for s in seeds:
        features = np.sort(np.random.default_rng(s).choice(ds.n_features, size=K, replace=False))
        accs.append(evaluate_subset(ds, features, cfg, s))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return float(np.mean(accs)), std
