"""Chi-square scoring of non-negative features and top-n selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset

STANDARD_SIZES = (256, 512, 1024, 2048, 4096)


class NegativeFeatureError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"chi-square needs non-negative features; feature {index} has a negative value")
        self.index = index


@dataclass(frozen=True)
class Chi2Report:
    scores: np.ndarray
    ranking: np.ndarray
    n_requested: int | None = None

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "score"])
            for r, j in enumerate(self.ranking):
                w.writerow([r, int(j), repr(float(self.scores[j]))])


def chi2_scores(data: LabeledDataset) -> Chi2Report:
    """Per-feature statistic over the class-by-feature table of summed values.

    Observed mass of feature j in class k is the sum of x_j over that class;
    the expected mass is the class's sample fraction times the feature total.
    Cells with zero expectation contribute nothing.
    """
    X = data.X
    neg = np.flatnonzero((X < 0).any(axis=0))
    if len(neg):
        raise NegativeFeatureError(int(neg[0]))
    Y = np.column_stack([data.y == 0, data.y == 1]).astype(np.float64)
    observed = Y.T @ X                           # (2, d)
    class_frac = Y.mean(axis=0)[:, None]         # (2, 1)
    expected = class_frac * X.sum(axis=0)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (observed - expected) ** 2 / expected, 0.0)
    scores = terms.sum(axis=0)
    # descending score, ascending index on ties
    ranking = np.lexsort((np.arange(len(scores)), -scores))
    return Chi2Report(scores, ranking)


def select_top_n(report: Chi2Report, n: int) -> np.ndarray:
    d = len(report.ranking)
    if n < 1 or n > d:
        raise ValueError(f"cannot select {n} of {d} features")
    return report.ranking[:n].copy()


class Chi2Selector:
    """Fit on a training split, then project any split onto the kept columns."""

    def __init__(self, n: int):
        self.n = int(n)
        self.report: Chi2Report | None = None
        self.indices: np.ndarray | None = None

    def fit(self, data: LabeledDataset) -> "Chi2Selector":
        rep = chi2_scores(data)
        self.report = Chi2Report(rep.scores, rep.ranking, self.n)
        self.indices = select_top_n(self.report, self.n)
        return self

    def transform(self, X) -> np.ndarray:
        return np.asarray(X)[:, self.indices]
