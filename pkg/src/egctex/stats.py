"""Average rankings over score tables and the Wilcoxon signed-rank test."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 20


@dataclass
class ScoreTable:
    rows: list[str]
    columns: list[str]
    values: np.ndarray
    groups: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.rows), len(self.columns)):
            raise ValueError(f"table shape {self.values.shape} does not match labels "
                             f"({len(self.rows)} rows, {len(self.columns)} columns)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("score table has missing or non-finite entries")
        if self.groups is not None and len(self.groups) != len(self.rows):
            raise ValueError("one group label per row required")

    @classmethod
    def from_csv(cls, path) -> "ScoreTable":
        """First column row labels; an optional ``group`` column groups rows."""
        with Path(path).open(newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if not header or len(header) < 3:
                raise ValueError(f"{path}: need a label column and at least two method columns")
            body = [r for r in reader if r]
        group_col = header.index("group") if "group" in header else None
        method_cols = [i for i in range(1, len(header)) if i != group_col]
        try:
            values = [[float(r[i]) for i in method_cols] for r in body]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed table ({exc})") from exc
        groups = [r[group_col] for r in body] if group_col is not None else None
        return cls([r[0] for r in body], [header[i] for i in method_cols], np.array(values), groups)


@dataclass
class RankReport:
    methods: list[str]
    row_ranks: np.ndarray                       # (rows, methods)
    average: dict[str, float]                   # over all rows
    group_average: dict[str, dict[str, float]] = field(default_factory=dict)
    overall: dict[str, float] = field(default_factory=dict)


def friedman_avg_ranks(table: ScoreTable) -> RankReport:
    """Rank methods within each row (1 = highest score, ties averaged) and average.

    With row groups, ``overall`` is the mean of the per-group averages;
    otherwise it equals the plain average over rows.
    """
    if table.values.shape[1] < 2 or table.values.shape[0] < 1:
        raise ValueError("need at least one row and two methods")
    ranks = np.vstack([rankdata(-row, method="average") for row in table.values])
    average = dict(zip(table.columns, ranks.mean(axis=0).tolist()))
    report = RankReport(list(table.columns), ranks, average)
    if table.groups is None:
        report.overall = dict(average)
        return report
    labels = list(dict.fromkeys(table.groups))
    for g in labels:
        sel = np.array([x == g for x in table.groups])
        report.group_average[g] = dict(zip(table.columns, ranks[sel].mean(axis=0).tolist()))
    report.overall = {
        m: float(np.mean([report.group_average[g][m] for g in labels])) for m in table.columns
    }
    return report


def format_ranks(report: RankReport) -> str:
    groups = list(report.group_average)
    head = ["Method"] + groups + ["Overall"]
    lines = ["  ".join(f"{h:>10}" for h in head)]
    for m in report.methods:
        cells = [m] + [f"{report.group_average[g][m]:.2f}" for g in groups] + [f"{report.overall[m]:.2f}"]
        lines.append("  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Wilcoxon


class Method(str, enum.Enum):
    EXACT = "exact"
    NORMAL = "normal_approx"


@dataclass
class WilcoxonResult:
    statistic: float      # rank sum of the differences whose sign contradicts the alternative
    p_value: float
    n_effective: int
    method: Method
    alternative: str
    degenerate: bool = False
    z: float | None = None


def _exact_lower_tail(doubled_ranks: np.ndarray, doubled_stat: int) -> float:
    """P(W <= w) when every rank's sign is an independent fair coin.

    Works on doubled ranks so average ranks (x.5) stay integral; the count
    table is the generating function prod_i (1 + t**r_i).
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)  # >= 2, since every rank is at least 1
        counts[r:] = counts[r:] + counts[:-r]
    hits = int(counts[: doubled_stat + 1].sum())
    return hits / float(1 << len(doubled_ranks))


def normal_lower_tail(w: float, n: int, tie_counts=None, continuity: bool = True) -> tuple[float, float]:
    """Normal approximation of P(W <= w); returns ``(p, z)``."""
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    if tie_counts is not None:
        t = np.asarray(tie_counts, dtype=np.float64)
        var -= float(np.sum(t ** 3 - t)) / 48.0
    z = (w - mean + (0.5 if continuity else 0.0)) / math.sqrt(var)
    return float(norm.cdf(z)), z


def wilcoxon_signed_rank(a, b, alternative: str = "a_greater", method: str = "auto",
                         continuity: bool = True) -> WilcoxonResult:
    """Paired signed-rank test.

    ``alternative`` is "a_greater", "a_less" or "two_sided". With
    ``method="auto"`` p-values are exact (sign enumeration) for up to 20
    non-zero differences and use the normal approximation with tie
    correction above that; "exact" and "normal" force one or the other.
    ``continuity`` only affects the normal approximation.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-D and equally long")
    if alternative not in ("a_greater", "a_less", "two_sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, Method.EXACT, alternative, degenerate=True)
    ranks = rankdata(np.abs(d), method="average")
    w_neg = float(ranks[d < 0].sum())
    w_pos = float(ranks[d > 0].sum())
    exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N)
    _, tie_counts = np.unique(ranks, return_counts=True)

    def one_sided(w):
        if exact:
            return _exact_lower_tail(np.rint(2 * ranks).astype(np.int64), int(round(2 * w))), None
        return normal_lower_tail(w, n, tie_counts, continuity)

    if alternative == "a_greater":
        stat = w_neg
    elif alternative == "a_less":
        stat = w_pos
    else:
        stat = min(w_neg, w_pos)
    p, z = one_sided(stat)
    if alternative == "two_sided":
        p = 2.0 * p
    return WilcoxonResult(stat, min(1.0, p), n, Method.EXACT if exact else Method.NORMAL, alternative, False, z)


def fusion_significance(top5_fused, top5_unfused, **kwargs) -> WilcoxonResult:
    """Are the best fused scores higher than the best unfused ones? Lists are paired by rank."""
    fused = sorted(top5_fused, reverse=True)
    unfused = sorted(top5_unfused, reverse=True)
    if len(fused) != 5 or len(unfused) != 5:
        raise ValueError("expected five scores on each side")
    return wilcoxon_signed_rank(fused, unfused, "a_greater", **kwargs)
