import numpy as np
import pytest

from data_fetcher import Dataset, prepare


def make_dataset(X, y, seed=0, name="toy"):
    """Split and standardize an in-memory dataset."""
    y = np.asarray(y, dtype=np.int64)
    classes = tuple(range(int(y.max()) + 1))
    return prepare(Dataset(X=np.asarray(X, dtype=np.float64), y=y, classes=classes, name=name), seed)


def separable_data(n=50, d=4, informative=(0, 2), shift=2.0, seed=0):
    """Two balanced classes separated along the `informative` columns only."""
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], [n - n // 2, n // 2])
    rng.shuffle(y)
    X = rng.normal(size=(n, d))
    X[:, list(informative)] += shift * (2 * y - 1)[:, None]
    return X, y


@pytest.fixture
def toy_dataset():
    X, y = separable_data(n=100, d=4, seed=1)
    return make_dataset(X, y, seed=1)
