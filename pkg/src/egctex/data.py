"""Shared containers: labeled feature sets and per-fold probability tables."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CLASSES = ("C", "S")
POSITIVE = "S"
ROW_SUM_TOLERANCE = 1e-6
# imported rows: within WARN_TOLERANCE renormalize silently, within
# REJECT_TOLERANCE renormalize with a warning, beyond that refuse the file
WARN_TOLERANCE = 1e-3
REJECT_TOLERANCE = 0.05


def encode_labels(labels) -> np.ndarray:
    """'C' -> 0, 'S' -> 1."""
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab not in CLASSES:
            raise ValueError(f"unknown label {lab!r}; expected one of {CLASSES}")
        out[i] = CLASSES.index(lab)
    return out


def decode_labels(y) -> list[str]:
    return [CLASSES[int(v)] for v in y]


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        y = np.asarray(self.y)
        if y.dtype.kind in "UO":
            y = encode_labels(list(y))
        self.y = y.astype(np.int64)
        if len(self.y) != len(self.X):
            raise ValueError("X and y lengths differ")
        if not self.sample_ids:
            self.sample_ids = [str(i) for i in range(len(self.y))]
        if len(self.sample_ids) != len(self.y):
            raise ValueError("sample_ids length differs from y")

    def __len__(self):
        return len(self.y)

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def class_counts(self) -> dict[str, int]:
        counts = Counter(int(v) for v in self.y)
        return {c: counts.get(i, 0) for i, c in enumerate(CLASSES)}

    @property
    def labels(self) -> list[str]:
        return decode_labels(self.y)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.X[idx], self.y[idx], [self.sample_ids[i] for i in idx])

    def require_trainable(self, min_per_class: int = 1):
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features must be finite")
        for c, n in self.class_counts.items():
            if n < min_per_class:
                raise ValueError(f"class {c} has {n} samples; need at least {min_per_class}")


@dataclass
class ProbabilityMatrix:
    """Posterior table for one classifier over one fold, columns in CLASSES order."""

    probs: np.ndarray
    sample_ids: list[str]
    classifier_id: str = ""
    fold_id: int = 0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] != len(CLASSES):
            raise ValueError(f"probability matrix must have {len(CLASSES)} columns")
        if len(self.sample_ids) != len(self.probs):
            raise ValueError("one sample id per row required")

    def __len__(self):
        return len(self.probs)

    def check(self, tol: float = ROW_SUM_TOLERANCE):
        if np.any(self.probs < -tol) or np.any(self.probs > 1 + tol):
            raise ValueError(f"{self.classifier_id}: probabilities outside [0, 1]")
        bad = np.abs(self.probs.sum(axis=1) - 1.0) > tol
        if bad.any():
            raise ValueError(f"{self.classifier_id}: {int(bad.sum())} rows do not sum to 1")

    def argmax_labels(self) -> np.ndarray:
        # ties resolve toward C (column 0)
        return (self.probs[:, 1] > self.probs[:, 0]).astype(np.int64)


def write_proba_csv(matrices, path, header_comment: str | None = None):
    """Write ``sample_id,fold,p_C,p_S`` rows, folds in order.

    An optional ``# comment`` first line carries provenance; readers skip it.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "fold", "p_C", "p_S"])
        for m in sorted(matrices, key=lambda m: m.fold_id):
            for sid, row in zip(m.sample_ids, m.probs):
                w.writerow([sid, m.fold_id, repr(float(row[0])), repr(float(row[1]))])


class ProbaImportError(ValueError):
    pass


def read_proba_csv(path, classifier_id: str = ""):
    """Read a probability CSV into one matrix per fold.

    Returns ``(matrices, n_warned)`` where ``n_warned`` counts rows whose sum
    was off by more than ``WARN_TOLERANCE`` and had to be renormalized.
    """
    path = Path(path)
    rows: dict[int, list] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = {"sample_id", "fold", "p_C", "p_S"} - set(reader.fieldnames or [])
        if missing:
            raise ProbaImportError(f"{path}: missing columns {sorted(missing)}")
        for line_no, rec in enumerate(reader, start=2):
            try:
                fold = int(rec["fold"])
                p = (float(rec["p_C"]), float(rec["p_S"]))
            except ValueError as exc:
                raise ProbaImportError(f"{path}:{line_no}: {exc}") from exc
            rows.setdefault(fold, []).append((rec["sample_id"], p))
    n_fixed = 0
    matrices = []
    for fold in sorted(rows):
        ids = [sid for sid, _ in rows[fold]]
        probs = np.array([p for _, p in rows[fold]], dtype=np.float64)
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ProbaImportError(f"{path}: negative or non-finite probability in fold {fold}")
        sums = probs.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > REJECT_TOLERANCE):
            bad = ids[int(np.argmax(off))]
            raise ProbaImportError(f"{path}: row {bad!r} in fold {fold} sums to {sums[np.argmax(off)]:.6f}")
        fix = off > ROW_SUM_TOLERANCE
        if fix.any():
            probs[fix] /= sums[fix, None]
            n_fixed += int((off > WARN_TOLERANCE).sum())
        matrices.append(ProbabilityMatrix(probs, ids, classifier_id, fold))
    if n_fixed:
        log.warning("event=renormalized classifier=%s rows=%d", classifier_id, n_fixed)
    return matrices, n_fixed
