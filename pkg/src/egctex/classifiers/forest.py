"""Random forest of fully grown CART trees (Gini impurity)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..data import LabeledDataset
from .base import Model, split_seed


@dataclass(frozen=True)
class ForestParams:
    trees: int = 10
    bootstrap: bool = True
    max_features: str | int = "sqrt"

    def n_candidates(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(d)))
        if self.max_features in (None, "all"):
            return d
        return max(1, min(d, int(self.max_features)))


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (nodes, 2) class frequencies at each node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64).reshape(-1, 2),
        )


def _best_split(x: np.ndarray, y: np.ndarray):
    """Lowest weighted Gini split of one feature: (impurity_sum, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None
    n = len(ys)
    n_left = np.arange(1, n)
    pos_left = np.cumsum(ys)[:-1]
    pos_total = pos_left[-1] + ys[-1]
    n_right = n - n_left
    pos_right = pos_total - pos_left
    # n * gini = 2 * pos * neg / n for each side
    cost = 2.0 * pos_left * (n_left - pos_left) / n_left + 2.0 * pos_right * (n_right - pos_right) / n_right
    cost = np.where(distinct, cost, np.inf)
    k = int(np.argmin(cost))
    lo, hi = xs[k], xs[k + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(cost[k]), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, max_features: int, rng: np.random.Generator) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        pos = float(y[idx].sum()) / len(idx)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append((1.0 - pos, pos))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    d = X.shape[1]
    while stack:
        node, idx = stack.pop()
        yi = y[idx]
        if len(idx) < 2 or yi.min() == yi.max():
            continue
        best = None
        tried = 0
        # keep drawing past max_features until some feature can split the node
        for f in rng.permutation(d):
            split = _best_split(X[idx, f], yi)
            if split is None:
                continue
            tried += 1
            if best is None or split[0] < best[0]:
                best = (split[0], split[1], int(f))
            if tried >= max_features:
                break
        # zero-gain splits are kept: they can enable pure children further down
        if best is None:
            continue
        _, thr, f = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64).reshape(-1, 2),
    )


class ForestModel(Model):
    classifier_id = "rf"

    def __init__(self, params: ForestParams, trees: list[Tree], n_features: int, seed: int):
        self.params = params
        self.trees = trees
        self.n_features = n_features
        self.seed = int(seed)

    def predict_proba_array(self, X) -> np.ndarray:
        X = self._check(X)
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def params_dict(self):
        return {**asdict(self.params), "seed": self.seed}

    def state(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, params, state, n_features):
        params = dict(params)
        seed = params.pop("seed")
        return cls(ForestParams(**params), [Tree.from_dict(t) for t in state["trees"]], n_features, seed)


def train_rf(data: LabeledDataset, trees: int = 10, seed: int = 0, bootstrap: bool = True,
             max_features="sqrt") -> ForestModel:
    """Each tree t draws from its own generator seeded by (seed, t)."""
    data.require_trainable(1)
    params = ForestParams(trees, bootstrap, max_features)
    m = params.n_candidates(data.feature_dim)
    n = len(data)
    out = []
    for t in range(trees):
        rng = np.random.default_rng(split_seed(seed, "tree", t))
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        out.append(grow_tree(data.X[idx], data.y[idx], m, rng))
    return ForestModel(params, out, data.feature_dim, seed)
