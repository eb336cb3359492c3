"""Common model surface and JSON serialization."""

from __future__ import annotations

import json

import numpy as np

from ..data import ProbabilityMatrix
from ..folds import split_seed, stratified_folds  # noqa: F401  (re-exported for the trainers)

FORMAT_VERSION = 1


class DimensionMismatchError(ValueError):
    pass


class Model:
    """Trained binary classifier; columns of every probability output are [C, S]."""

    classifier_id = "model"
    n_features: int

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_proba_array(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba_array(X)
        return (p[:, 1] > p[:, 0]).astype(np.int64)

    def params_dict(self) -> dict:
        return {}

    def state(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "classifier_id": self.classifier_id,
            "n_features": self.n_features,
            "params": self.params_dict(),
            "state": self.state(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def predict_proba(model: Model, samples, sample_ids=None, classifier_id: str | None = None,
                  fold_id: int = 0) -> ProbabilityMatrix:
    """Score samples (array rows or FeatureVectors) into a ProbabilityMatrix."""
    X = np.asarray([getattr(s, "values", s) for s in samples], dtype=np.float64) \
        if not isinstance(samples, np.ndarray) else samples
    probs = model.predict_proba_array(X)
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(probs))]
    return ProbabilityMatrix(probs, ids, classifier_id or model.classifier_id, fold_id)
