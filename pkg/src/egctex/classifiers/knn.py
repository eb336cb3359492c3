from __future__ import annotations

import numpy as np

from ..data import LabeledDataset
from .base import Model
from .svm import squared_distances


class KnnModel(Model):
    """Uniform-vote k nearest neighbours under Euclidean distance.

    Equal distances are ordered by training index, so the neighbour set is
    deterministic.
    """

    classifier_id = "knn"

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.k = int(k)
        self.n_features = self.X.shape[1]

    def neighbors(self, X) -> np.ndarray:
        X = self._check(X)
        d2 = squared_distances(X, self.X)
        return np.argsort(d2, axis=1, kind="stable")[:, : self.k]

    def predict_proba_array(self, X) -> np.ndarray:
        votes_s = self.y[self.neighbors(X)].sum(axis=1) / self.k
        return np.column_stack([1.0 - votes_s, votes_s])

    def params_dict(self):
        return {"k": self.k}

    def state(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_state(cls, params, state, n_features):
        return cls(np.array(state["X"]).reshape(-1, n_features), np.array(state["y"]), params["k"])


def train_knn(data: LabeledDataset, k: int = 5) -> KnnModel:
    data.require_trainable(1)
    if k < 1 or k > len(data):
        raise ValueError(f"k={k} must be in [1, {len(data)}]")
    return KnnModel(data.X, data.y, k)
