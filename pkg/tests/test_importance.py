import numpy as np
import pandas as pd
import pytest

from errors import ConfigError, DataError
from importance import (
    AccumulationMode, ImportanceAccumulator, Metric, accumulate, attribution_batch,
    export_scores, load_scores, neuron_strength, read_pgm, scores_to_grid, select_top_k,
    write_heatmap,
)
from sparse_net import Network, SparseLayer, forward, init_network


def _dense_layer(W, bias=None):
    W = np.asarray(W, dtype=np.float64)
    n_in, n_out = W.shape
    flat = np.flatnonzero(W.ravel() != 0)
    return SparseLayer.from_flat(n_in, n_out, flat, W.ravel()[flat], bias=bias)


def _random_relu_net(rng, d, hidden, C, P=0.3):
    net = init_network(d, C, P, seed=int(rng.integers(1 << 31)), hidden_sizes=hidden)
    for layer in net.layers:
        layer.bias[:] = rng.normal(0.0, 0.1, layer.n_out)
    return net


# ---------------------------------------------------------------------
# neuron_strength
# ---------------------------------------------------------------------
class TestNeuronStrength:
    def test_hand_example(self):
        net = Network([_dense_layer([[0.5, -0.3], [0.2, 0.1]]), _dense_layer([[1.0], [1.0]])])
        np.testing.assert_allclose(neuron_strength(net), [0.8, 0.3])

    def test_matches_dense_row_sums(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            net = init_network(30, 3, 0.7, seed=trial, hidden_sizes=(20,))
            first = net.layers[0]
            # dyadic values sum exactly in any order
            first.values[:] = rng.integers(-64, 64, size=first.nnz) / 8.0
            oracle = np.abs(first.to_dense()).sum(axis=1)
            np.testing.assert_array_equal(neuron_strength(net), oracle)

    def test_empty_row_scores_zero(self):
        W = np.array([[0.0, 0.0], [0.4, -0.2], [0.0, 0.3]])
        net = Network([_dense_layer(W), _dense_layer([[1.0], [1.0]])])
        strength = neuron_strength(net)
        assert strength[0] == 0.0
        assert strength[1] > 0 and strength[2] > 0


# ---------------------------------------------------------------------
# attribution_batch
# ---------------------------------------------------------------------
class TestAttribution:
    def test_linear_net_is_abs_weight_product(self):
        net = init_network(7, 3, 0.3, seed=4, hidden_sizes=(6, 5), hidden_activation="identity")
        M = net.layers[0].to_dense() @ net.layers[1].to_dense() @ net.layers[2].to_dense()
        X = np.random.default_rng(4).normal(size=(9, 7))
        attr = attribution_batch(net, X)
        assert attr.shape == (3, 7)
        np.testing.assert_allclose(attr, np.abs(M.T), rtol=1e-10, atol=1e-14)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        h = 1e-4
        checked = 0
        for trial in range(20):
            d, hidden, C = int(rng.integers(3, 21)), (int(rng.integers(2, 11)), int(rng.integers(2, 6))), 3
            net = _random_relu_net(rng, d, hidden, C)
            x = rng.normal(size=(1, d))
            cache = forward(net, x)
            if any(np.abs(z).min() <= 1e-3 for z in cache.pre_activations[:-1]):
                continue
            fd = np.empty((C, d))
            for j in range(d):
                up, down = x.copy(), x.copy()
                up[0, j] += h
                down[0, j] -= h
                fd[:, j] = (forward(net, up).logits[0] - forward(net, down).logits[0]) / (2 * h)
            np.testing.assert_allclose(attribution_batch(net, x), np.abs(fd), rtol=1e-4, atol=1e-8)
            checked += 1
        assert checked >= 10

    def test_dead_unit_contributes_nothing(self):
        net = init_network(4, 2, 0.0, seed=3, hidden_sizes=(3,))
        net.layers[0].bias[1] = -1e6
        X = np.random.default_rng(3).normal(size=(8, 4))
        before = attribution_batch(net, X)

        out = net.layers[1]
        out.values[out.rows == 1] = 100.0
        np.testing.assert_array_equal(attribution_batch(net, X), before)

    def test_feature_without_path_to_logits(self):
        # feature 1 only reaches hidden unit 1, which has no outgoing weights
        W1 = np.array([[1.0, 0.0], [0.0, 2.0], [0.5, 0.0]])
        W2 = np.array([[1.0, -1.0], [0.0, 0.0]])
        net = Network([_dense_layer(W1), _dense_layer(W2)], hidden_activation="identity")
        attr = attribution_batch(net, np.ones((2, 3)))
        np.testing.assert_array_equal(attr[:, 1], 0.0)
        assert neuron_strength(net)[1] == 2.0
        np.testing.assert_allclose(attr[:, 0], [1.0, 1.0])
        np.testing.assert_allclose(attr[:, 2], [0.5, 0.5])

    def test_reuses_forward_cache(self):
        net = init_network(5, 2, 0.4, seed=0, hidden_sizes=(6,))
        X = np.random.default_rng(0).normal(size=(4, 5))
        np.testing.assert_array_equal(attribution_batch(net, X, cache=forward(net, X)),
                                      attribution_batch(net, X))

    def test_rejects_foreign_cache(self):
        net = init_network(5, 2, 0.4, seed=0, hidden_sizes=(6,))
        cache = forward(net, np.zeros((3, 5)))
        with pytest.raises(DataError):
            attribution_batch(net, np.zeros((4, 5)), cache=cache)

    def test_rejects_empty_batch(self):
        net = init_network(5, 2, 0.4, seed=0, hidden_sizes=(6,))
        with pytest.raises(DataError):
            attribution_batch(net, np.zeros((0, 5)))


# ---------------------------------------------------------------------
# accumulation
# ---------------------------------------------------------------------
class TestAccumulator:
    def test_sums_over_output_neurons(self):
        acc = accumulate(ImportanceAccumulator(1), np.array([[0.3], [0.7]]), epoch=0)
        assert acc.scores[0] == pytest.approx(1.0)

    def test_all_epochs_sums_iterations(self):
        acc = ImportanceAccumulator(1)
        for it, s in enumerate([1.0, 2.0, 3.0]):
            acc.add(np.array([s]), epoch=it // 2, iteration=it)
        assert acc.scores[0] == 6.0

    def test_modes(self):
        acc = ImportanceAccumulator(2, mode="last_epoch")
        acc.add(np.array([1.0, 0.0]), epoch=0, iteration=0)
        acc.add(np.array([2.0, 0.0]), epoch=0, iteration=1)
        acc.add(np.array([0.0, 3.0]), epoch=1, iteration=2)
        acc.add(np.array([0.0, 4.0]), epoch=1, iteration=3)
        np.testing.assert_array_equal(acc.scores, [0.0, 7.0])
        np.testing.assert_array_equal(acc.scores_for("all_epochs"), [3.0, 7.0])
        np.testing.assert_array_equal(acc.scores_for(AccumulationMode.LAST_ITERATION), [0.0, 4.0])
        assert acc.iterations_seen == 4 and acc.last_iteration == 3

    def test_all_epochs_equals_sum_of_epoch_snapshots(self):
        rng = np.random.default_rng(5)
        acc = ImportanceAccumulator(6)
        for epoch in range(5):
            for it in range(int(rng.integers(1, 4))):
                acc.add(rng.random(6), epoch=epoch, iteration=it)
        snaps = acc.snapshots()
        assert len(snaps) == 5
        np.testing.assert_allclose(np.sum(snaps, axis=0), acc.scores_for("all_epochs"), rtol=1e-12)
        np.testing.assert_array_equal(snaps[-1], acc.scores_for("last_epoch"))

    def test_all_epochs_is_monotone(self):
        rng = np.random.default_rng(1)
        acc = ImportanceAccumulator(4)
        previous = acc.scores
        for it in range(10):
            acc.add(rng.random(4), epoch=it // 3, iteration=it)
            assert np.all(acc.scores >= previous)
            previous = acc.scores

    def test_rejects_negative_contribution(self):
        with pytest.raises(DataError):
            ImportanceAccumulator(2).add(np.array([0.1, -0.1]), epoch=0)

    def test_rejects_wrong_width(self):
        with pytest.raises(DataError):
            accumulate(ImportanceAccumulator(3), np.ones((2, 4)), epoch=0)

    @pytest.mark.parametrize("text,expected", [
        ("AllEpochs", AccumulationMode.ALL_EPOCHS),
        ("last-epoch", AccumulationMode.LAST_EPOCH),
        ("LastIteration", AccumulationMode.LAST_ITERATION),
    ])
    def test_parse_mode(self, text, expected):
        assert AccumulationMode.parse(text) is expected

    def test_parse_metric(self):
        assert Metric.parse("qs") is Metric.STRENGTH
        assert Metric.parse("Attr") is Metric.ATTRIBUTION
        with pytest.raises(ConfigError):
            Metric.parse("shap")
        with pytest.raises(ConfigError):
            AccumulationMode.parse("sometimes")


# ---------------------------------------------------------------------
# select_top_k
# ---------------------------------------------------------------------
class TestSelectTopK:
    def test_tie_break_by_index(self):
        assert select_top_k([0.1, 0.9, 0.9, 0.2], 2) == [1, 2]

    def test_k_equals_d(self):
        assert sorted(select_top_k([0.3, 0.1, 0.2], 3)) == [0, 1, 2]

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(8)
        for trial in range(20):
            d = int(rng.integers(1, 60))
            scores = np.round(rng.random(d), 1)
            K = int(rng.integers(1, d + 1))
            oracle = sorted(range(d), key=lambda j: (-scores[j], j))[:K]
            assert select_top_k(scores, K) == oracle

    def test_invariant_to_positive_scaling(self):
        scores = np.random.default_rng(2).random(40)
        assert select_top_k(scores * 4.0, 10) == select_top_k(scores, 10)

    @pytest.mark.parametrize("K", [0, 4, -1])
    def test_rejects_k_out_of_range(self, K):
        with pytest.raises(ConfigError):
            select_top_k([0.1, 0.2, 0.3], K)


# ---------------------------------------------------------------------
# export and heatmaps
# ---------------------------------------------------------------------
class TestExport:
    def test_scores_file_round_trip(self, tmp_path):
        scores = np.random.default_rng(0).random(12)
        path = export_scores(scores, tmp_path / "importance.csv", "Attr", "all_epochs", epoch=7, seed=3)
        np.testing.assert_array_equal(load_scores(path), scores)
        df = pd.read_csv(path)
        assert df.loc[int(np.argmax(scores)), "rank"] == 1
        assert set(df["metric"]) == {"Attr"} and set(df["seed"]) == {3}

    def test_missing_scores_file(self, tmp_path):
        with pytest.raises(DataError):
            load_scores(tmp_path / "absent.csv")

    def test_grid_shape(self):
        grid, gray = scores_to_grid(np.arange(784, dtype=float), 28, 28)
        assert grid.shape == gray.shape == (28, 28)
        assert gray.dtype == np.uint8
        assert gray.min() == 0 and gray.max() == 255
        assert grid[1, 0] == 28.0

    def test_constant_scores_give_zeros(self):
        _, gray = scores_to_grid(np.full(6, 0.4), 2, 3)
        np.testing.assert_array_equal(gray, 0)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            scores_to_grid(np.zeros(10), 3, 3)

    def test_heatmap_files(self, tmp_path):
        scores = np.random.default_rng(1).random(20)
        pgm, grid_csv = write_heatmap(scores, 4, 5, tmp_path / "h.pgm", tmp_path / "h.csv")
        grid, gray = scores_to_grid(scores, 4, 5)
        np.testing.assert_array_equal(read_pgm(pgm), gray)
        raw = pd.read_csv(grid_csv, header=None).to_numpy()
        np.testing.assert_array_equal(raw, grid)
        np.testing.assert_array_equal(raw.ravel(), scores)
