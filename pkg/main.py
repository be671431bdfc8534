# main.py
"""
Main CLI orchestrator.
Commands: train, select, sweep, ablation, evaluate, benchmark, synthetic, flops, heatmap.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from data_fetcher import generate_synthetic, read_index_file, write_csv, write_informative
from errors import DataError, SparseFSError
from evaluation import EvalConfig, evaluate_repeats, random_subset_baseline
from flops import emit_accuracy_vs_flops, estimate_flops
from importance import export_scores, load_scores, write_heatmap
from logging_config import setup_logging
from pipeline import (
    ExperimentConfig, __version__, coverage_curve, load_prepared,
    run_accumulation_ablation, run_coverage_benchmark, run_grid, run_k_ranking,
    run_sparsity_sweep, train_cell,
)
from ranking_engine import RankingEngine
from result_builder import ResultBuilder
from sparse_net import save_checkpoint

logger = logging.getLogger("main")

OUTPUT_ENV = "SPARSEFS_OUTPUT_DIR"
DEFAULT_OUTPUT = "results"


# -----------------------------
# Argument helpers
# -----------------------------
def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON experiment config")
    p.add_argument("--dataset", help="CSV path or synthetic:<n_samples>")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--method", help="Dense, SET, RigL or a baseline such as SET-Attr")
    p.add_argument("--metric", help="QS or Attr")
    p.add_argument("--mode", help="all_epochs, last_epoch or last_iteration")
    p.add_argument("--K", type=int, dest="K")
    p.add_argument("--sparsity-grid", type=_float_list, dest="sparsity_grid")
    p.add_argument("--l2-grid", type=_float_list, dest="l2_grid")
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--hidden-sizes", type=_int_list, dest="hidden_sizes")
    p.add_argument("--n-jobs", type=int, dest="n_jobs")
    p.add_argument("--heatmap-shape", type=_int_list, dest="heatmap_shape")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsefs",
        description="Feature selection with dynamically sparse MLPs (SET / RigL) "
                    "ranked by neuron strength or neuron attribution.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network and export importance, history and checkpoint")
    _add_experiment_flags(p)
    p.add_argument("--sparsity", type=float, help="sparsity of the run (default: first grid value)")
    p.add_argument("--l2", type=float, help="L2 of the run (default: first grid value)")
    _add_output_flags(p)

    p = sub.add_parser("select", help="grid search, select top-K features and evaluate them")
    _add_experiment_flags(p)
    _add_output_flags(p)

    p = sub.add_parser("sweep", help="accuracy and FLOPs for every sparsity of the grid at a fixed L2")
    _add_experiment_flags(p)
    p.add_argument("--l2", type=float, help="L2 of the sweep (default: smallest grid value)")
    _add_output_flags(p)

    p = sub.add_parser("ablation", help="compare the three accumulation modes from one run per seed")
    _add_experiment_flags(p)
    p.add_argument("--sparsity", type=float, help="sparsity of the runs (default: first grid value)")
    p.add_argument("--l2", type=float, help="L2 of the runs (default: first grid value)")
    _add_output_flags(p)

    p = sub.add_parser("evaluate", help="downstream accuracy of a feature file")
    _add_experiment_flags(p)
    p.add_argument("--features", required=True, help="file with one feature index per line")
    p.add_argument("--repeats", type=int, default=5)
    _add_output_flags(p)

    p = sub.add_parser("benchmark", help="synthetic coverage benchmark with average ranking over K")
    _add_experiment_flags(p)
    p.add_argument("--methods", help="comma-separated baselines, e.g. SET-Attr,Dense-QS")
    p.add_argument("--sample-sizes", type=_int_list, dest="sample_sizes")
    p.add_argument("--k-values", type=_int_list, dest="k_values")
    _add_output_flags(p)

    p = sub.add_parser("synthetic", help="write the synthetic dataset and its informative indices")
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--n-features", type=int, default=200)
    p.add_argument("--n-informative", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_output_flags(p)

    p = sub.add_parser("flops", help="theoretical FLOPs of a training run")
    p.add_argument("--shape", type=_int_list, required=True, help="layer sizes, e.g. 784,1000,100,10")
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--samples", type=int, required=True, help="training samples per epoch")
    p.add_argument("--strategy", default="None", help="SET, RigL or None")
    p.add_argument("--metric", help="QS or Attr to include importance costs")
    _add_output_flags(p)

    p = sub.add_parser("heatmap", help="reshape an importance file into a graymap")
    p.add_argument("--scores", required=True, help="importance CSV written by train/select")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    _add_output_flags(p)
    return parser


# -----------------------------
# Shared plumbing
# -----------------------------
def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {name: getattr(args, name, None) for name in (
        "dataset", "label_column", "method", "metric", "mode", "K", "sparsity_grid", "l2_grid",
        "seeds", "max_epochs", "patience", "batch_size", "hidden_sizes", "n_jobs", "heatmap_shape",
        "sample_sizes", "k_values")}
    if getattr(args, "methods", None):
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if overrides.get("method") and "-" in overrides["method"]:
        overrides["metric"] = None
    return cfg.with_overrides(**overrides)


def _output_dir(args, cfg: Optional[ExperimentConfig] = None) -> Path:
    chosen = args.output_dir or (cfg.output_dir if cfg else None) or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    out = Path(chosen)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_manifest(out: Path, command: str, snapshot: dict, seeds) -> Path:
    config_hash = hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).hexdigest()
    return _write_json(out / "manifest.json", {
        "command": command, "config_hash": config_hash, "seeds": list(seeds),
        "version": __version__, "config": snapshot,
    })


def _write_frame(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, index=False, float_format="%.17g")
    return path


# -----------------------------
# Commands
# -----------------------------
def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    ds = load_prepared(cfg)
    p, l2 = _first_cell(cfg, args.sparsity, args.l2)
    seed = cfg.first_seed

    outcome = train_cell(cfg, ds, p, l2, seed)
    snapshot = cfg.snapshot()
    save_checkpoint(outcome.network, out / "checkpoint.npz", config=snapshot)
    save_checkpoint(outcome.best_network, out / "checkpoint_best.npz", config=snapshot)
    _write_frame(outcome.history, out / "history.csv")
    outcome.topology_log.write_jsonl(out / "topology.jsonl")
    export_scores(outcome.accumulator.scores, out / "importance.csv", cfg.importance_metric.value,
                  cfg.accumulation_mode.value, outcome.epochs_run, seed, ds.feature_names)
    _write_json(out / "summary.json", {
        "baseline": cfg.baseline, "dataset": ds.name, "sparsity": p, "l2": l2, "seed": seed,
        "epochs_run": outcome.epochs_run, "best_epoch": outcome.best_epoch,
        "best_val_loss": outcome.best_val_loss, "active_weights": outcome.network.active_counts(),
        "dense_gradient_passes": outcome.topology_log.dense_gradient_passes,
        "dense_gradient_flops": outcome.topology_log.dense_gradient_flops,
    })
    _write_manifest(out, "train", snapshot, [seed])
    print(f"Trained {cfg.baseline} for {outcome.epochs_run} epochs "
          f"(best val loss {outcome.best_val_loss:.5f}); outputs in {out}")
    return 0


def cmd_select(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    ds = load_prepared(cfg)
    result = run_grid(cfg, ds)
    seed = cfg.first_seed
    scores = result.scores[seed]

    (out / "selected_features.txt").write_text(
        "".join(f"{j}\n" for j in result.selected[seed]), encoding="utf-8")
    export_scores(scores, out / "importance.csv", cfg.importance_metric.value,
                  cfg.accumulation_mode.value, result.epochs_run[0], seed, ds.feature_names)
    _write_frame(result.results_rows(), out / "results.csv")
    random_mean, random_std = random_subset_baseline(ds, cfg.K, EvalConfig(K=cfg.K), cfg.seeds)
    summary = result.to_dict()
    summary["random_baseline"] = {"accuracy_mean": random_mean, "accuracy_std": random_std}
    _write_json(out / "summary.json", summary)
    if cfg.heatmap_shape:
        h, w = cfg.heatmap_shape
        write_heatmap(scores, h, w, out / "heatmap.pgm", out / "heatmap_grid.csv")
    _write_manifest(out, "select", cfg.snapshot(), cfg.seeds)
    print(ResultBuilder().build_selection_report(result))
    print(f"Random {cfg.K} features: {random_mean * 100:.2f} ± {random_std * 100:.2f}")
    return 0


def _first_cell(cfg: ExperimentConfig, sparsity: Optional[float], l2: Optional[float]):
    p, first_l2 = cfg.grid_cells()[0]
    if sparsity is not None and cfg.model != "Dense":
        p = sparsity
    return p, (first_l2 if l2 is None else l2)


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    ds = load_prepared(cfg)
    _, l2 = _first_cell(cfg, None, args.l2)

    rows = run_sparsity_sweep(cfg, l2, ds)
    _write_frame(rows, out / "sweep.csv")
    _write_manifest(out, "sweep", {**cfg.snapshot(), "l2": l2}, cfg.seeds)
    print(f"Sparsity sweep of {cfg.baseline} on {ds.name} (l2={l2:g})")
    print(rows[["sparsity", "accuracy_mean", "accuracy_std", "epochs_run_mean", "flops"]].to_string(index=False))
    return 0


def cmd_ablation(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    ds = load_prepared(cfg)
    p, l2 = _first_cell(cfg, args.sparsity, args.l2)

    rows = run_accumulation_ablation(cfg, p, l2, ds)
    _write_frame(rows, out / "ablation.csv")
    _write_manifest(out, "ablation", {**cfg.snapshot(), "sparsity": p, "l2": l2}, cfg.seeds)
    summary = rows.groupby("mode", sort=True)["accuracy"].agg(["mean", "std"])
    print(f"Accumulation modes of {cfg.baseline} on {ds.name} (P={p:g}, l2={l2:g}, K={cfg.K})")
    print(summary.to_string(float_format=lambda v: f"{v:.4f}"))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    ds = load_prepared(cfg)
    features = read_index_file(args.features)
    eval_cfg = EvalConfig(K=max(1, len(features)), repeats=args.repeats).validate()
    seeds = list(range(eval_cfg.repeats))
    mean, std, accs = evaluate_repeats(ds, features, eval_cfg, seeds)
    _write_json(out / "evaluation.json", {
        "dataset": ds.name, "features": features, "accuracies": accs,
        "accuracy_mean": mean, "accuracy_std": std,
    })
    snapshot = {**cfg.snapshot(), "features": features, "repeats": eval_cfg.repeats}
    _write_manifest(out, "evaluate", snapshot, seeds)
    print(f"Accuracy on {ds.name} with {len(features)} features: {mean * 100:.2f} ± {std * 100:.2f}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _experiment_config(args)
    out = _output_dir(args, cfg)
    builder = ResultBuilder()

    coverage_rows, results_rows, results = run_coverage_benchmark(cfg)
    curve = coverage_curve(coverage_rows)
    _write_frame(coverage_rows, out / "coverage.csv")
    _write_frame(curve, out / "coverage_curve.csv")
    _write_frame(results_rows, out / "results.csv")
    _write_frame(emit_accuracy_vs_flops(results_rows), out / "accuracy_vs_flops.csv")

    k_rows = []
    for n in cfg.sample_sizes:
        name = f"synthetic_{n}"
        group = [r for r in results if r.dataset == name]
        ds = load_prepared(cfg.with_overrides(dataset=f"synthetic:{n}"))
        k_rows.append(run_k_ranking(group, ds, cfg.k_values))
    k_table = pd.concat(k_rows, ignore_index=True)
    _write_frame(k_table, out / "k_results.csv")

    wide = RankingEngine.to_wide(k_table, experiment_cols=("dataset", "K"))
    rank_scores = RankingEngine.rank_scores(wide)
    _write_frame(rank_scores.reset_index(), out / "ranking_scores.csv")
    average = RankingEngine.average_ranking(wide)
    _write_frame(average.rename_axis("method").reset_index(), out / "average_ranking.csv")
    best = RankingEngine.best_methods(wide).rename("best").reset_index()
    _write_frame(best, out / "best_methods.csv")
    pairwise = None
    if {"SET-Attr", "Dense-Attr"} <= set(wide.columns):
        pairwise = RankingEngine.pairwise_comparison(wide, "SET-Attr", "Dense-Attr")

    _write_manifest(out, "benchmark", cfg.snapshot(), cfg.seeds)
    print(builder.build_coverage_report(curve))
    print()
    print(builder.build_accuracy_table(results_rows))
    print()
    print(builder.build_ranking_report(average, pairwise))
    print(RankingEngine.textual_verdict(average, pairwise))
    print()
    print(builder.build_flops_table(results_rows))
    return 0


def cmd_synthetic(args) -> int:
    out = _output_dir(args)
    ds = generate_synthetic(args.n_samples, args.n_features, args.n_informative, seed=args.seed)
    data_path = write_csv(ds, out / f"synthetic_{args.n_samples}.csv")
    info_path = write_informative(ds, out / f"synthetic_{args.n_samples}_informative.txt")
    snapshot = {"n_samples": args.n_samples, "n_features": args.n_features,
                "n_informative": args.n_informative, "seed": args.seed}
    _write_manifest(out, "synthetic", snapshot, [args.seed])
    print(f"Wrote {data_path} and {info_path}")
    return 0


def cmd_flops(args) -> int:
    out = _output_dir(args)
    report = estimate_flops(args.shape, args.sparsity, args.epochs, args.samples,
                            args.strategy, args.metric)
    _write_frame(pd.DataFrame([report.to_dict()]), out / "flops.csv")
    snapshot = {"shape": args.shape, "sparsity": args.sparsity, "epochs": args.epochs,
                "samples": args.samples, "strategy": args.strategy, "metric": args.metric}
    _write_manifest(out, "flops", snapshot, [])
    print(ResultBuilder().build_flops_report(args.shape, report, args.sparsity))
    return 0


def cmd_heatmap(args) -> int:
    out = _output_dir(args)
    scores = load_scores(args.scores)
    pgm, grid = write_heatmap(scores, args.height, args.width, out / "heatmap.pgm", out / "heatmap_grid.csv")
    snapshot = {"scores": str(args.scores), "height": args.height, "width": args.width,
                "scores_sha256": hashlib.sha256(np.asarray(scores).tobytes()).hexdigest()}
    _write_manifest(out, "heatmap", snapshot, [])
    print(f"Wrote {pgm} and {grid}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "select": cmd_select,
    "sweep": cmd_sweep,
    "ablation": cmd_ablation,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "synthetic": cmd_synthetic,
    "flops": cmd_flops,
    "heatmap": cmd_heatmap,
}


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        return COMMANDS[args.command](args)
    except SparseFSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(run())
