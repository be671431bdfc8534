import math

import numpy as np
import pandas as pd
import pytest

import pipeline
from conftest import make_dataset, separable_data
from data_fetcher import generate_synthetic, prepare
from dst_engine import DstConfig
from errors import ConfigError, NumericError
from evaluation import EvalConfig, evaluate_subset, random_subset_baseline
from importance import AccumulationMode, neuron_strength, select_top_k
from pipeline import (
    ExperimentConfig, coverage_curve, load_prepared, parse_method, run_accumulation_ablation,
    run_coverage_benchmark, run_grid, run_k_ranking, run_sparsity_sweep, train_cell,
    train_with_importance,
)
from ranking_engine import METHODS
from sparse_net import TrainConfig, active_count, init_network


@pytest.fixture(scope="module")
def small_synthetic():
    return prepare(generate_synthetic(200, n_features=20, n_informative=5, seed=0), 0)


def _cfg(**overrides):
    base = dict(method="SET", metric="Attr", K=5, sparsity_grid=[0.5], l2_grid=[1e-4], seeds=[0],
                max_epochs=4, patience=4, batch_size=32, hidden_sizes=[16, 8])
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------
class TestExperimentConfig:
    def test_baseline_name_is_split(self):
        cfg = ExperimentConfig(method="RigL-QS")
        assert (cfg.method, cfg.metric, cfg.baseline) == ("RigL", "QS", "RigL-QS")

    def test_parse_method(self):
        assert parse_method("dense", "qs")[0] == "Dense"
        with pytest.raises(ConfigError):
            parse_method("Lasso-Attr")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"dataset": "x.csv", "epochs": 3})

    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"dataset": "synthetic:100", "method": "SET-QS", "K": 7, "seeds": [3, 4]}')
        cfg = ExperimentConfig.from_file(path)
        assert cfg.K == 7 and cfg.first_seed == 3 and cfg.baseline == "SET-QS"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(path)

    def test_dense_grid_fixes_sparsity(self):
        cfg = ExperimentConfig(method="Dense", sparsity_grid=[0.5, 0.9], l2_grid=[1e-3, 1e-4])
        assert cfg.grid_cells() == [(0.0, 1e-4), (0.0, 1e-3)]

    def test_grid_cells_are_canonical(self):
        a = ExperimentConfig(sparsity_grid=[0.9, 0.5], l2_grid=[1e-3, 5e-5])
        b = ExperimentConfig(sparsity_grid=[0.5, 0.9], l2_grid=[5e-5, 1e-3])
        assert a.grid_cells() == b.grid_cells()

    @pytest.mark.parametrize("overrides", [
        {"K": 0}, {"sparsity_grid": [1.0]}, {"l2_grid": []}, {"seeds": []},
        {"mode": "sometimes"}, {"n_jobs": 0}, {"heatmap_shape": [28]}, {"patience": 300},
        {"K": "5"}, {"sparsity_grid": 0.5}, {"seeds": [0, "1"]}, {"K": True}, {"methods": "SET-QS"},
    ])
    def test_validate(self, overrides):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**overrides)

    @pytest.mark.parametrize("data", [{"K": "5"}, {"sparsity_grid": 0.5}, {"hidden_sizes": [16.5]}])
    def test_from_dict_rejects_wrong_types(self, data):
        with pytest.raises(ConfigError, match="expects"):
            ExperimentConfig.from_dict(data)

    def test_from_dict_accepts_int_where_float_expected(self):
        cfg = ExperimentConfig.from_dict({"sparsity_grid": [0, 0.5], "learning_rate": 1})
        assert cfg.grid_cells()[0][0] == 0.0

    def test_overrides_skip_none(self):
        cfg = ExperimentConfig().with_overrides(K=None, max_epochs=10, patience=5)
        assert cfg.K == 100 and cfg.max_epochs == 10

    def test_hash_is_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()
        assert ExperimentConfig().config_hash() != ExperimentConfig(K=5).config_hash()


# ---------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------
class TestTraining:
    def test_patience_stops_after_flat_epochs(self, toy_dataset):
        net = init_network(4, 2, 0.0, seed=0, hidden_sizes=(6,))
        outcome = train_with_importance(
            net, toy_dataset, TrainConfig(learning_rate=0.0, max_epochs=200, patience=50, batch_size=16),
            DstConfig.dense(), "QS", "all_epochs", seed=0)
        assert outcome.epochs_run == 51
        assert outcome.best_epoch == 1
        assert len(outcome.history) == 51

    def test_frozen_dense_strength_accumulates_linearly(self, toy_dataset):
        net = init_network(4, 2, 0.0, seed=1, hidden_sizes=(6,))
        strength = neuron_strength(net)
        outcome = train_with_importance(
            net, toy_dataset, TrainConfig(learning_rate=0.0, l2=0.0, max_epochs=7, patience=7, batch_size=16),
            DstConfig.dense(), "QS", "all_epochs", seed=1)
        assert outcome.epochs_run == 7
        np.testing.assert_allclose(outcome.accumulator.scores, 7 * strength, rtol=1e-12)

    def test_all_epochs_equals_sum_of_last_epochs(self, small_synthetic):
        outcome = train_cell(_cfg(max_epochs=5, patience=5), small_synthetic, 0.5, 1e-4, seed=3)
        acc = outcome.accumulator
        assert len(acc.snapshots()) == 5
        np.testing.assert_allclose(np.sum(acc.snapshots(), axis=0), acc.scores_for("all_epochs"),
                                   rtol=1e-9)

    @pytest.mark.parametrize("method", ["SET", "RigL"])
    def test_sparsity_is_conserved(self, small_synthetic, method):
        outcome = train_cell(_cfg(method=method), small_synthetic, 0.5, 1e-4, seed=0)
        expected = [active_count(a, b, 0.5) for a, b in outcome.network.shape]
        assert outcome.network.active_counts() == expected
        assert len(outcome.topology_log) == 4 * outcome.network.n_layers

    def test_history_columns(self, small_synthetic):
        outcome = train_cell(_cfg(), small_synthetic, 0.5, 1e-4, seed=0)
        assert list(outcome.history.columns) == ["epoch", "train_loss", "val_loss", "val_accuracy", "active_weights"]
        assert outcome.best_val_loss == outcome.history["val_loss"].min()

    def test_separable_toy_finds_informative_features(self):
        hits = 0
        for seed in range(5):
            X, y = separable_data(n=200, d=4, informative=(0, 2), shift=2.0, seed=seed)
            ds = make_dataset(X, y, seed=seed)
            cfg = _cfg(K=2, hidden_sizes=[32, 16], max_epochs=50, patience=50, batch_size=16,
                       learning_rate=0.01)
            outcome = train_cell(cfg, ds, 0.5, 1e-4, seed=seed)
            hits += sorted(select_top_k(outcome.accumulator.scores, 2)) == [0, 2]
        assert hits >= 4


# ---------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------
class TestGrid:
    def test_single_cell_equals_direct_run(self, small_synthetic):
        cfg = _cfg()
        result = run_grid(cfg, small_synthetic)
        direct = train_cell(cfg, small_synthetic, 0.5, 1e-4, seed=0)
        np.testing.assert_array_equal(result.scores[0], direct.accumulator.scores)
        assert result.selected[0] == select_top_k(direct.accumulator.scores, 5)
        assert (result.sparsity, result.l2) == (0.5, 1e-4)

    def test_diverging_cell_loses(self, small_synthetic, monkeypatch):
        real = pipeline.train_cell

        def flaky(cfg, ds, sparsity, l2, seed):
            if sparsity == 0.5:
                raise NumericError("loss exploded")
            return real(cfg, ds, sparsity, l2, seed)

        monkeypatch.setattr(pipeline, "train_cell", flaky)
        result = run_grid(_cfg(sparsity_grid=[0.5, 0.8]), small_synthetic)
        assert result.sparsity == 0.8
        assert math.isinf(result.grid_losses[(0.5, 1e-4)])

    def test_all_cells_diverging(self, small_synthetic, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericError("loss exploded")

        monkeypatch.setattr(pipeline, "train_cell", broken)
        with pytest.raises(NumericError):
            run_grid(_cfg(), small_synthetic)

    def test_winner_ignores_listing_order(self, small_synthetic):
        a = run_grid(_cfg(sparsity_grid=[0.8, 0.5], l2_grid=[1e-3, 1e-4]), small_synthetic)
        b = run_grid(_cfg(sparsity_grid=[0.5, 0.8], l2_grid=[1e-4, 1e-3]), small_synthetic)
        assert (a.sparsity, a.l2) == (b.sparsity, b.l2)
        assert a.grid_losses == b.grid_losses

    def test_deterministic(self, small_synthetic):
        cfg = _cfg(seeds=[0, 1])
        a, b = run_grid(cfg, small_synthetic), run_grid(cfg, small_synthetic)
        assert a.selected == b.selected
        assert a.accuracies == b.accuracies

    def test_result_rows_and_cell(self, small_synthetic):
        result = run_grid(_cfg(seeds=[0, 1]), small_synthetic)
        rows = result.results_rows()
        assert rows["seed"].tolist() == [0, 1]
        assert set(rows["method"]) == {"SET-Attr"}
        assert result.table_cell().endswith("(0.5)")
        assert result.to_dict()["grid_losses"][0]["sparsity"] == 0.5

    def test_k_larger_than_d(self, small_synthetic):
        with pytest.raises(ConfigError):
            run_grid(_cfg(K=21), small_synthetic)


# ---------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------
class TestExperiments:
    def test_sweep_has_one_row_per_sparsity(self, small_synthetic):
        grid = [0.25, 0.5, 0.8, 0.9, 0.95, 0.98]
        rows = run_sparsity_sweep(_cfg(sparsity_grid=grid, max_epochs=2, patience=2), 1e-4, small_synthetic)
        assert rows["sparsity"].tolist() == grid
        assert rows["flops"].is_monotonic_decreasing
        assert rows["flops"].is_unique

    def test_dense_sweep_is_single_row(self, small_synthetic):
        rows = run_sparsity_sweep(_cfg(method="Dense", sparsity_grid=[0.5, 0.9]), 1e-4, small_synthetic)
        assert rows["sparsity"].tolist() == [0.0]

    def test_accumulation_ablation(self, small_synthetic):
        rows = run_accumulation_ablation(_cfg(seeds=[0, 1, 2], max_epochs=5, patience=5),
                                         0.5, 1e-4, small_synthetic)
        assert len(rows) == 9
        assert set(rows["mode"]) == {m.value for m in AccumulationMode}
        per_seed = rows.groupby("seed")["selected"].nunique()
        assert (per_seed > 1).any()

    def test_k_ranking(self, small_synthetic):
        result = run_grid(_cfg(seeds=[0, 1]), small_synthetic)
        rows = run_k_ranking([result], small_synthetic, k_values=[2, 1, 99])
        assert sorted(set(rows["K"])) == [1, 2]
        assert len(rows) == 4

    def test_coverage_benchmark_cardinality(self):
        cfg = _cfg(methods=["SET-Attr", "Dense-QS"], sample_sizes=[60, 80], seeds=[0, 1],
                   K=100, max_epochs=2, patience=2)
        cov, results_df, results = run_coverage_benchmark(cfg)
        assert len(cov) == 2 * 2 * 2
        assert len(results) == 4 and len(results_df) == 8
        assert cov["coverage"].between(0.0, 1.0).all()
        curve = coverage_curve(cov)
        assert len(curve) == 4
        assert list(curve.columns) == ["method", "n_samples", "mean", "std"]


@pytest.fixture(scope="module")
def synthetic_benchmark():
    cfg = ExperimentConfig(methods=list(METHODS), sample_sizes=[100, 10000], sparsity_grid=[0.8],
                           l2_grid=[1e-4], K=100, seeds=[0, 1, 2, 3, 4], max_epochs=30, patience=30)
    cov, _, results = run_coverage_benchmark(cfg)
    ds = prepare(generate_synthetic(10000, seed=cfg.effective_data_seed), cfg.effective_data_seed)
    large = {r.baseline: r for r in results if r.dataset == ds.name}
    return coverage_curve(cov).set_index(["method", "n_samples"])["mean"], large, ds


@pytest.mark.slow
class TestAcceptance:
    def test_set_keeps_every_layer_count_for_fifty_epochs(self):
        cfg = ExperimentConfig(dataset="synthetic:1000", method="SET-Attr", seeds=[0],
                               max_epochs=50, patience=50)
        outcome = train_cell(cfg, load_prepared(cfg), 0.95, 1e-4, seed=0)
        net = outcome.network
        expected = [active_count(a, b, 0.95) for a, b in net.shape]
        assert outcome.epochs_run == 50
        assert (outcome.history["active_weights"] == sum(expected)).all()
        assert net.active_counts() == expected
        events = outcome.topology_log.events
        assert {(e.epoch, e.layer) for e in events} == {
            (epoch, layer) for epoch in range(1, 51) for layer in range(net.n_layers)}
        for event in events:
            assert len(event.dropped) == len(event.added)
            assert len(event.dropped) == math.floor(cfg.zeta * expected[event.layer] + 1e-9)

    def test_set_methods_reach_high_coverage(self, synthetic_benchmark):
        curve, _, _ = synthetic_benchmark
        for method in ("SET-Attr", "SET-QS"):
            assert curve[(method, 10000)] >= 0.8

    @pytest.mark.parametrize("method", METHODS)
    def test_coverage_grows_and_beats_random(self, synthetic_benchmark, method):
        curve, _, _ = synthetic_benchmark
        assert curve[(method, 10000)] > curve[(method, 100)]
        assert curve[(method, 10000)] > 0.5

    @pytest.mark.parametrize("method", METHODS)
    def test_top_100_is_no_worse_than_random_100(self, synthetic_benchmark, method):
        _, large, ds = synthetic_benchmark
        random_mean, _ = random_subset_baseline(ds, 100, EvalConfig(K=100), range(5))
        assert large[method].accuracy_mean >= random_mean - 0.01

    @pytest.mark.parametrize("method", METHODS)
    def test_top_feature_beats_random_feature_by_ten_points(self, synthetic_benchmark, method):
        # a random 100 of 200 columns already holds ~50 informative ones, so the
        # ten-point margin only shows once the budget is small enough to miss
        _, large, ds = synthetic_benchmark
        result = large[method]
        eval_cfg = EvalConfig(K=1)
        picked = [evaluate_subset(ds, select_top_k(result.scores[s], 1), eval_cfg, s) for s in result.seeds]
        random_mean, _ = random_subset_baseline(ds, 1, eval_cfg, range(50))
        assert np.mean(picked) >= random_mean + 0.10
