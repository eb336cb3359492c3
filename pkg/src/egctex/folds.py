"""Stratified fold assignment and seed derivation."""

from __future__ import annotations

import zlib

import numpy as np


def split_seed(seed: int, *tags) -> int:
    """Derive an independent 32-bit seed from a master seed and string/int tags."""
    words = [int(seed) & 0xFFFFFFFF]
    for t in tags:
        words.append(zlib.crc32(str(t).encode()) if not isinstance(t, int) else t & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def fold_assignments(y, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) and counts.min() < k:
        small = classes[int(np.argmin(counts))]
        raise ValueError(f"k={k} exceeds the {counts.min()} samples of class {small!r}")
    rng = np.random.default_rng(seed)
    out = np.empty(len(y), dtype=np.int64)
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        out[idx] = np.arange(len(idx)) % k
    return out


def stratified_folds(y, k: int, seed: int):
    """Yield ``(train_idx, test_idx)`` pairs in fold order."""
    assign = fold_assignments(y, k, seed)
    for f in range(k):
        yield np.flatnonzero(assign != f), np.flatnonzero(assign == f)
