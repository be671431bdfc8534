"""
Ranking engine for method comparison.
Encapsulates:
- Average ranking score over experiments
- Pairwise win/tie/loss comparison
- Per-experiment best performers
"""

from typing import Dict, Optional

import numpy as np
import pandas as pd

from errors import DataError

# The six baselines: {Dense, SET, RigL} x {QS, Attr}
METHODS = ("Dense-QS", "Dense-Attr", "SET-QS", "SET-Attr", "RigL-QS", "RigL-Attr")


class RankingEngine:
    """Compare methods on an accuracy table (rows: experiments, columns: methods)."""

    @staticmethod
    def to_wide(results: pd.DataFrame, experiment_cols=("dataset", "K"),
                method_col: str = "method", value_col: str = "accuracy") -> pd.DataFrame:
        """Pivot a long results table into experiments x methods, averaging repeated seeds."""
        missing = {method_col, value_col, *experiment_cols} - set(results.columns)
        if missing:
            raise DataError(f"results table lacks columns {sorted(missing)}")
        return results.pivot_table(index=list(experiment_cols), columns=method_col,
                                   values=value_col, aggfunc="mean")

    @staticmethod
    def _check(table: pd.DataFrame) -> pd.DataFrame:
        if table.shape[1] < 2:
            raise DataError("ranking needs at least two methods")
        if table.shape[0] < 1:
            raise DataError("ranking needs at least one experiment")
        if table.isna().any().any():
            row, col = np.argwhere(table.isna().to_numpy())[0]
            raise DataError(f"missing accuracy for method '{table.columns[col]}' "
                            f"in experiment '{table.index[row]}'")
        return table.astype(float)

    @classmethod
    def rank_scores(cls, table: pd.DataFrame) -> pd.DataFrame:
        """Per-experiment scores: best of M gets M, worst 1, ties share the mean score."""
        table = cls._check(table)
        return table.rank(axis=1, method="average", ascending=True)

    @classmethod
    def average_ranking(cls, table: pd.DataFrame) -> pd.Series:
        """Rank scores averaged over experiments, best method first."""
        scores = cls.rank_scores(table).mean(axis=0)
        scores.name = "average_ranking"
        return scores.sort_values(ascending=False, kind="stable")

    @classmethod
    def pairwise_comparison(cls, table: pd.DataFrame, first: str, second: str) -> Dict[str, float]:
        """Wins, ties and losses of `first` against `second`, and the mean accuracy difference."""
        table = cls._check(table)
        for name in (first, second):
            if name not in table.columns:
                raise DataError(f"method '{name}' not in results")
        diff = table[first] - table[second]
        return {
            "first": first,
            "second": second,
            "wins": int((diff > 0).sum()),
            "ties": int((diff == 0).sum()),
            "losses": int((diff < 0).sum()),
            "mean_difference": float(diff.mean()),
        }

    @classmethod
    def best_methods(cls, table: pd.DataFrame) -> pd.Series:
        """Per experiment, the comma-joined methods reaching the top accuracy."""
        table = cls._check(table)
        top = table.max(axis=1)
        return table.apply(lambda row: ",".join(c for c in table.columns if row[c] == top[row.name]),
                           axis=1)

    @staticmethod
    def textual_verdict(scores: pd.Series, pairwise: Optional[Dict[str, float]] = None) -> str:
        """Short interpretation of a ranking."""
        best = scores.index[0]
        lines = [f"Best average ranking: {best} ({scores.iloc[0]:.2f} of {len(scores)})"]
        if pairwise:
            lines.append(f"{pairwise['first']} vs {pairwise['second']}: "
                         f"{pairwise['wins']} wins, {pairwise['ties']} ties, {pairwise['losses']} losses")
        return "\n".join(lines)
