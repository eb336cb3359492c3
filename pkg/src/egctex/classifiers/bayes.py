from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..data import LabeledDataset
from .base import Model

VAR_SMOOTHING = 1e-9


class GaussianNbModel(Model):
    """Per-class, per-feature normal likelihoods combined in log space."""

    classifier_id = "gnb"

    def __init__(self, means, variances, log_priors, epsilon: float):
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.asarray(variances, dtype=np.float64)
        self.log_priors = np.asarray(log_priors, dtype=np.float64)
        self.epsilon = float(epsilon)
        self.n_features = self.means.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self._check(X)
        out = []
        for c in range(len(self.log_priors)):
            var = self.variances[c]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * var)) - 0.5 * np.sum((X - self.means[c]) ** 2 / var, axis=1)
            out.append(self.log_priors[c] + ll)
        return np.column_stack(out)

    def predict_proba_array(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def params_dict(self):
        return {"var_smoothing": VAR_SMOOTHING}

    def state(self):
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_priors": self.log_priors.tolist(),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_state(cls, params, state, n_features):
        return cls(state["means"], state["variances"], state["log_priors"], state["epsilon"])


def train_gnb(data: LabeledDataset) -> GaussianNbModel:
    data.require_trainable(1)
    X, y = data.X, data.y
    # smoothing is relative to the widest feature; fall back to an absolute
    # floor when every feature is constant
    epsilon = VAR_SMOOTHING * float(np.var(X, axis=0).max())
    if epsilon == 0.0:
        epsilon = VAR_SMOOTHING
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        means.append(Xc.mean(axis=0))
        variances.append(Xc.var(axis=0) + epsilon)
        priors.append(len(Xc) / len(X))
    return GaussianNbModel(means, variances, np.log(priors), epsilon)
