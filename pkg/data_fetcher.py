# data_fetcher.py
"""
Dataset ingestion for feature selection runs.
Reads a labelled CSV (or builds the synthetic benchmark), splits it
65/15/20 and standardizes it with train-split statistics only.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

VAL_PERCENT = 15
TEST_PERCENT = 20
MIN_SAMPLES = 10
MIN_STRATUM = 3
DEGENERATE_STD = 1e-12
SYNTHETIC_PREFIX = "synthetic:"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, dense labels and (once assigned) the train/val/test split."""

    X: np.ndarray
    y: np.ndarray
    classes: Tuple
    feature_names: Optional[Tuple[str, ...]] = None
    informative: Optional[np.ndarray] = None
    train: Optional[np.ndarray] = None
    val: Optional[np.ndarray] = None
    test: Optional[np.ndarray] = None
    mean_: Optional[np.ndarray] = None
    scale_: Optional[np.ndarray] = None
    name: str = "dataset"

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def has_split(self) -> bool:
        return self.train is not None

    def part(self, which: str) -> Tuple[np.ndarray, np.ndarray]:
        """(X, y) of the 'train', 'val' or 'test' split."""
        if not self.has_split:
            raise DataError(f"dataset '{self.name}' has no split assigned")
        idx = getattr(self, which)
        return self.X[idx], self.y[idx]

    def with_features(self, features: Sequence[int]) -> "Dataset":
        """Same rows and split restricted to the given columns."""
        features = np.asarray(features, dtype=np.int64)
        names = None if self.feature_names is None else tuple(self.feature_names[j] for j in features)
        return replace(self, X=self.X[:, features], feature_names=names, informative=None,
                       mean_=None, scale_=None)


class DataFetcher:
    """Loads a labelled CSV with a header row into a Dataset."""

    def __init__(self, path, label_column: str):
        self.path = Path(path)
        self.label_column = label_column

    def _read_frame(self) -> pd.DataFrame:
        if not self.path.exists():
            raise DataError(f"dataset file not found: {self.path}")
        try:
            df = pd.read_csv(self.path, dtype=str, keep_default_na=False, skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise DataError(f"{self.path}: no samples") from None
        except pd.errors.ParserError as exc:
            raise DataError(f"{self.path}: ragged rows ({exc})") from None
        except UnicodeDecodeError as exc:
            raise DataError(f"{self.path}: not valid UTF-8 text ({exc.reason} at byte {exc.start})") from None
        if df.empty:
            raise DataError(f"{self.path}: no samples")
        if self.label_column not in df.columns:
            raise DataError(f"{self.path}: label column '{self.label_column}' not found")
        return df

    def get_features(self, df: pd.DataFrame) -> Tuple[np.ndarray, List[str]]:
        feats = df.drop(columns=[self.label_column])
        if feats.shape[1] == 0:
            raise DataError(f"{self.path}: no feature columns")
        X = np.empty(feats.shape, dtype=np.float64)
        for c, col in enumerate(feats.columns):
            raw = feats[col]
            num = pd.to_numeric(raw, errors="coerce")
            # NaN and +-inf both count as unreadable
            bad = ~np.isfinite(num.to_numpy(dtype=np.float64))
            if bad.any():
                r = int(np.flatnonzero(bad)[0])
                cell = raw.iloc[r]
                # +2: header line and 1-based numbering
                if cell is None or (isinstance(cell, float) and np.isnan(cell)):
                    raise DataError(f"{self.path}: ragged row at line {r + 2} (column '{col}' missing)")
                raise DataError(f"{self.path}: non-numeric or non-finite value '{cell}' at line {r + 2}, column '{col}'")
            X[:, c] = num.to_numpy(dtype=np.float64)
        return X, [str(c) for c in feats.columns]

    def get_labels(self, df: pd.DataFrame) -> Tuple[np.ndarray, Tuple]:
        """Dense labels in [0, C): numeric order if every label is numeric, else lexicographic."""
        raw = df[self.label_column]
        if raw.isna().any() or (raw == "").any():
            raise DataError(f"{self.path}: missing label values")
        numeric = pd.to_numeric(raw, errors="coerce")
        if not numeric.isna().any():
            values = numeric.to_numpy()
            classes = np.unique(values)
        else:
            values = raw.to_numpy(dtype=str)
            classes = np.array(sorted(set(values)))
        if classes.shape[0] < 2:
            raise DataError(f"{self.path}: labels contain a single class")
        y = np.searchsorted(classes, values).astype(np.int64)
        return y, tuple(c.item() if hasattr(c, "item") else c for c in classes)

    def validate(self) -> bool:
        """Does the file parse into at least one sample with a label column?"""
        try:
            self._read_frame()
        except DataError:
            return False
        return True

    def load(self) -> Dataset:
        df = self._read_frame()
        X, names = self.get_features(df)
        y, classes = self.get_labels(df)
        logger.info("Loaded %s: %d samples, %d features, %d classes",
                    self.path.name, X.shape[0], X.shape[1], len(classes))
        return Dataset(X=X, y=y, classes=classes, feature_names=tuple(names), name=self.path.stem)


# ---------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------
def load_csv(path, label_column: str) -> Dataset:
    """Load a labelled CSV. Labels that all parse as numbers are ordered numerically
    (2 before 10); otherwise they are ordered lexicographically as strings."""
    return DataFetcher(path, label_column).load()


def write_csv(ds: Dataset, path, label_column: str = "label") -> Path:
    """Write features and original label values with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = ds.feature_names or tuple(f"f{j}" for j in range(ds.n_features))
    df = pd.DataFrame(ds.X, columns=list(names))
    df[label_column] = [ds.classes[k] for k in ds.y]
    df.to_csv(path, index=False, float_format="%.17g")
    return path


def write_informative(ds: Dataset, path) -> Path:
    """One-column file of ground-truth informative feature indices."""
    if ds.informative is None:
        raise DataError(f"dataset '{ds.name}' has no informative-feature ground truth")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(ds.informative, dtype=np.int64), fmt="%d")
    return path


def read_index_file(path) -> List[int]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"index file not found: {path}")
    return [int(line) for line in path.read_text().split()]


def _stratum_quotas(counts: np.ndarray, total: int) -> np.ndarray:
    """Split `total` across classes proportionally (largest remainder, ties by class order)."""
    ideal = counts * total / counts.sum()
    quotas = np.floor(ideal).astype(np.int64)
    order = np.lexsort((np.arange(counts.shape[0]), -(ideal - quotas)))
    quotas[order[: total - quotas.sum()]] += 1
    return quotas


def split(ds: Dataset, seed: int) -> Dataset:
    """
    Assign a 65/15/20 train/val/test split.

    val and test sizes are floored, train takes the remainder. Stratified by
    class when every class has at least 3 samples, otherwise a plain shuffle.
    """
    m = ds.n_samples
    if m < MIN_SAMPLES:
        raise DataError(f"splitting needs at least {MIN_SAMPLES} samples, got {m}")
    n_val = VAL_PERCENT * m // 100
    n_test = TEST_PERCENT * m // 100
    rng = np.random.default_rng(seed)

    counts = np.bincount(ds.y, minlength=ds.n_classes)
    if counts.min() >= MIN_STRATUM:
        val_q = _stratum_quotas(counts, n_val)
        test_q = _stratum_quotas(counts, n_test)
        train, val, test = [], [], []
        for c in range(ds.n_classes):
            members = rng.permutation(np.flatnonzero(ds.y == c))
            test.append(members[: test_q[c]])
            val.append(members[test_q[c]: test_q[c] + val_q[c]])
            train.append(members[test_q[c] + val_q[c]:])
        train, val, test = (np.sort(np.concatenate(p)) for p in (train, val, test))
    else:
        logger.warning("Some class has fewer than %d samples: using a plain shuffle split", MIN_STRATUM)
        perm = rng.permutation(m)
        test, val, train = (np.sort(p) for p in (perm[:n_test], perm[n_test:n_test + n_val],
                                                 perm[n_test + n_val:]))
    return replace(ds, train=train, val=val, test=test)


def standardize(ds: Dataset) -> Dataset:
    """(x - mean) / std with train-split statistics; near-constant train features become 0."""
    if not ds.has_split:
        raise DataError("standardize needs a split: call split() first")
    train_X = ds.X[ds.train]
    mean = train_X.mean(axis=0)
    std = train_X.std(axis=0)
    degenerate = std < DEGENERATE_STD
    X = (ds.X - mean) / np.where(degenerate, 1.0, std)
    X[:, degenerate] = 0.0
    return replace(ds, X=X, mean_=mean, scale_=std)


def generate_synthetic(n_samples: int, n_features: int = 200, n_informative: int = 100,
                       seed: int = 0) -> Dataset:
    """
    Balanced binary task where only `n_informative` columns carry signal.

    Informative column j is (2y - 1) * c_j + N(0, 1) with |c_j| ~ U[0.5, 1.5]
    and a random sign; every other column is N(0, 1). The informative
    positions are scattered at random and recorded as ground truth.
    """
    if not 0 <= n_informative <= n_features:
        raise ConfigError(f"n_informative ({n_informative}) must lie in [0, n_features={n_features}]")
    if n_samples < 2:
        raise ConfigError(f"need at least 2 samples, got {n_samples}")

    rng = np.random.default_rng(seed)
    y = np.repeat(np.array([0, 1], dtype=np.int64), [n_samples - n_samples // 2, n_samples // 2])
    rng.shuffle(y)
    informative = np.sort(rng.choice(n_features, size=n_informative, replace=False))
    X = rng.normal(size=(n_samples, n_features))
    shift = rng.uniform(0.5, 1.5, size=n_informative) * rng.choice([-1.0, 1.0], size=n_informative)
    X[:, informative] += np.outer(2 * y - 1, shift)

    return Dataset(
        X=X, y=y, classes=(0, 1),
        feature_names=tuple(f"f{j}" for j in range(n_features)),
        informative=informative, name=f"synthetic_{n_samples}",
    )


def fetch_dataset(ref: str, label_column: str = "label", seed: int = 0) -> Dataset:
    """Resolve a dataset reference: a CSV path or 'synthetic:<n_samples>'."""
    ref = str(ref)
    if ref.startswith(SYNTHETIC_PREFIX):
        try:
            n = int(ref[len(SYNTHETIC_PREFIX):])
        except ValueError:
            raise ConfigError(f"bad synthetic dataset reference '{ref}'") from None
        return generate_synthetic(n, seed=seed)
    return load_csv(ref, label_column)


def prepare(ds: Dataset, seed: int) -> Dataset:
    """Split then standardize."""
    return standardize(split(ds, seed))
