"""Binary classifiers that all emit [C, S] posterior estimates."""

import json

from .base import DimensionMismatchError, Model, predict_proba
from .bayes import GaussianNbModel, train_gnb
from .forest import ForestModel, ForestParams, train_rf
from .knn import KnnModel, train_knn
from .svm import (
    DEFAULT_C_GRID,
    DEFAULT_GAMMA_GRID,
    SmoConvergenceError,
    SvmModel,
    SvmParams,
    grid_search_svm,
    train_svm,
)

MODEL_TYPES = {cls.classifier_id: cls for cls in (SvmModel, KnnModel, GaussianNbModel, ForestModel)}


def model_from_dict(d: dict) -> Model:
    if d.get("format_version") != 1:
        raise ValueError(f"unsupported model format {d.get('format_version')!r}")
    cls = MODEL_TYPES[d["classifier_id"]]
    return cls.from_state(d["params"], d["state"], d["n_features"])


def model_from_json(text: str) -> Model:
    return model_from_dict(json.loads(text))


__all__ = [
    "DEFAULT_C_GRID", "DEFAULT_GAMMA_GRID", "DimensionMismatchError", "ForestModel", "ForestParams",
    "GaussianNbModel", "KnnModel", "MODEL_TYPES", "Model", "SmoConvergenceError", "SvmModel",
    "SvmParams", "grid_search_svm", "model_from_dict", "model_from_json", "predict_proba",
    "train_gnb", "train_knn", "train_rf", "train_svm",
]
