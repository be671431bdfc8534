# ==============================================
# === result_builder.py
# ==============================================

"""
Module: result_builder
Formats experiment results for the terminal. Machine-readable files are
written by main.py; everything here is display-only rounding.
"""

from typing import Dict, Optional

import pandas as pd

from flops import CONVENTION, DISPLAY_SCALE, FlopsReport, count_parameters


def fmt(x) -> str:
    """Format floats to 4 decimals."""
    try:
        return f"{float(x):.4f}"
    except (TypeError, ValueError):
        return str(x)


def fmt_pct(x) -> str:
    """Format a fraction as percent: 0.9624 -> 96.24%."""
    try:
        return f"{float(x) * 100:.2f}%"
    except (TypeError, ValueError):
        return str(x)


def fmt_tflops(x) -> str:
    """FLOPs divided by 10^12."""
    return f"{float(x) / DISPLAY_SCALE:.4g}"


class ResultBuilder:
    """Builds readable reports for terminal display."""

    def build_selection_report(self, result, top: int = 20) -> str:
        """Selection and evaluation summary of one experiment."""
        first = result.seeds[0]
        report = [
            f"Feature Selection Report: {result.baseline} on {result.dataset}",
            "=" * 60,
            "",
            "-- Chosen configuration --",
            f"Sparsity: {result.sparsity:g}",
            f"L2: {result.l2:g}",
            f"K: {result.K}",
            f"Epochs run: {', '.join(str(e) for e in result.epochs_run)}",
        ]
        if result.grid_losses:
            report.append("\n-- Grid (best validation loss, first seed) --")
            for (p, l2), loss in sorted(result.grid_losses.items()):
                report.append(f"P={p:g} l2={l2:g}: {fmt(loss)}")

        report.append("\n-- Downstream accuracy --")
        for seed, acc in zip(result.seeds, result.accuracies):
            report.append(f"seed {seed}: {fmt_pct(acc)}")
        report.append(f"Mean ± std: {result.table_cell()}")

        shown = result.selected[first][:top]
        report.append(f"\n-- Top {len(shown)} features (seed {first}) --")
        report.append(", ".join(str(j) for j in shown))

        flops = result.flops[0]
        report.append("\n-- Cost --")
        report.append(f"Training FLOPs (x1e12): {fmt_tflops(flops.train_total)}")
        report.append(f"  of which DST overhead: {fmt_tflops(flops.dst_overhead)}")
        report.append(f"Importance overhead (x1e12): "
                      f"{fmt_tflops(flops.attribution_overhead + flops.strength_overhead)}")
        return "\n".join(report)

    def build_flops_report(self, shape, report: FlopsReport, sparsity: float) -> str:
        params = count_parameters(shape, sparsity)
        lines = [
            f"FLOPs estimate for {' -> '.join(str(s) for s in shape)} at sparsity {sparsity:g}",
            "=" * 60,
            f"Forward per sample: {report.forward_per_sample}",
            f"Backward per sample: {report.backward_per_sample}",
            f"Activation per sample: {report.activation_per_sample}",
            f"Samples processed: {report.samples_processed}",
            f"Train total (x1e12): {fmt_tflops(report.train_total)}",
            f"DST overhead (x1e12): {fmt_tflops(report.dst_overhead)}",
            f"Attribution overhead (x1e12): {fmt_tflops(report.attribution_overhead)}",
            f"Parameters: {params['total']} of {params['dense_total']} "
            f"(memory reduction {fmt_pct(params['memory_reduction'])})",
            "",
            f"Convention: {CONVENTION}",
        ]
        return "\n".join(lines)

    def build_flops_table(self, rows: pd.DataFrame) -> str:
        """Datasets as rows, methods as columns, training FLOPs / 1e12."""
        if rows.empty:
            return "(no FLOPs rows)"
        table = rows.pivot_table(index="dataset", columns="method", values="flops", aggfunc="mean")
        return (table / DISPLAY_SCALE).to_string(float_format=lambda v: f"{v:.2f}")

    def build_accuracy_table(self, results: pd.DataFrame) -> str:
        """Mean ± std accuracy per dataset and method, chosen sparsity in parentheses."""
        if results.empty:
            return "(no results)"
        grouped = results.groupby(["dataset", "method"], sort=True)
        cells = grouped.apply(lambda g: f"{g['accuracy'].mean() * 100:.2f}"
                                        f"±{(g['accuracy'].std(ddof=1) if len(g) > 1 else 0.0) * 100:.2f}"
                                        f" ({g['sparsity'].iloc[0]:g})")
        return cells.unstack("method").to_string()

    def build_ranking_report(self, scores: pd.Series, pairwise: Optional[Dict] = None) -> str:
        report = ["Average Ranking", "=" * 60]
        for method, score in scores.items():
            report.append(f"{method}: {score:.2f}")
        if pairwise:
            report.append(f"\n{pairwise['first']} vs {pairwise['second']}: "
                          f"{pairwise['wins']} wins / {pairwise['ties']} ties / {pairwise['losses']} losses "
                          f"(mean difference {fmt_pct(pairwise['mean_difference'])})")
        return "\n".join(report)

    def build_coverage_report(self, curve: pd.DataFrame) -> str:
        if curve.empty:
            return "(no coverage rows)"
        table = curve.pivot_table(index="method", columns="n_samples", values="mean")
        return "Mean coverage of informative features\n" + table.to_string(float_format=lambda v: f"{v:.3f}")
