"""RBF support vector machine trained by SMO, with Platt-calibrated outputs.

The solver follows the maximal-violating-pair scheme with second-order
working-set selection used by libsvm; the sigmoid fit is the Newton
method with backtracking of Lin, Lin and Weng (2007).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..data import LabeledDataset
from .base import Model, split_seed, stratified_folds

log = logging.getLogger(__name__)

TAU = 1e-12


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    gamma: float = 1.0
    tolerance: float = 1e-3
    max_passes: int = 1000
    probability_folds: int = 5

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0):
            raise ValueError(f"C and gamma must be positive, got C={self.C}, gamma={self.gamma}")


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a2 = np.einsum("ij,ij->i", A, A)[:, None]
    b2 = np.einsum("ij,ij->i", B, B)[None, :]
    return np.maximum(a2 + b2 - 2.0 * (A @ B.T), 0.0)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(np.asarray(A, float), np.asarray(B, float)))


@dataclass
class SmoResult:
    alpha: np.ndarray
    b: float
    violation: float
    iterations: int
    converged: bool


class SmoConvergenceError(RuntimeError):
    def __init__(self, result: SmoResult):
        super().__init__(
            f"SMO did not converge after {result.iterations} iterations "
            f"(max KKT violation {result.violation:.3g})"
        )
        self.result = result
        self.violation = result.violation


def smo(K: np.ndarray, y: np.ndarray, C: float, tolerance: float = 1e-3, max_passes: int = 1000) -> SmoResult:
    """Solve the soft-margin dual for a precomputed kernel and labels in {-1, +1}.

    Stops once the maximal violating pair gap drops below ``tolerance``.
    ``max_passes`` caps the work at ``max_passes * n`` pair updates; hitting
    the cap raises :class:`SmoConvergenceError` carrying the last iterate.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    diag = np.diag(K).copy()
    pos = y > 0
    max_iter = max(1, max_passes) * max(n, 1)
    it = 0
    gap = math.inf
    while True:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        score = -y * grad
        up_scores = np.where(up, score, -np.inf)
        low_scores = np.where(low, score, np.inf)
        i = int(np.argmax(up_scores))
        m_up = up_scores[i]
        m_low = low_scores.min()
        gap = m_up - m_low
        if not np.isfinite(gap) or gap < tolerance:
            break
        if it >= max_iter:
            result = SmoResult(alpha, _bias(alpha, grad, y, C), float(gap), it, False)
            raise SmoConvergenceError(result)
        it += 1

        b_it = m_up - score
        a_it = diag[i] + diag - 2.0 * K[i]
        a_it = np.where(a_it > 0, a_it, TAU)
        cand = low & (score < m_up)
        gain = np.where(cand, -(b_it * b_it) / a_it, np.inf)
        j = int(np.argmin(gain))

        lam = b_it[j] / a_it[j]
        # alpha_i += y_i*lam, alpha_j -= y_j*lam, both kept in [0, C]
        lam = min(lam, C - alpha[i] if pos[i] else alpha[i], alpha[j] if pos[j] else C - alpha[j])
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += y * lam * (K[:, i] - K[:, j])
    return SmoResult(alpha, _bias(alpha, grad, y, C), float(gap) if np.isfinite(gap) else 0.0, it, True)


def _bias(alpha, grad, y, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        pos = y > 0
        at_upper = alpha >= C
        ub_mask = np.where(at_upper, ~pos, pos)
        lb_mask = ~ub_mask
        ub = yg[ub_mask].min() if ub_mask.any() else math.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -math.inf
        if math.isinf(ub) or math.isinf(lb):
            rho = ub if math.isfinite(ub) else lb if math.isfinite(lb) else 0.0
        else:
            rho = (ub + lb) / 2.0
    return -rho


# --------------------------------------------------------------------------
# Platt scaling


def fit_sigmoid(decision: np.ndarray, positive: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit P(positive | f) = 1 / (1 + exp(A f + B)) by regularized maximum likelihood."""
    f = np.asarray(decision, dtype=np.float64)
    t_pos = np.asarray(positive, dtype=bool)
    n1 = int(t_pos.sum())
    n0 = len(f) - n1
    hi = (n1 + 1.0) / (n1 + 2.0)
    lo = 1.0 / (n0 + 2.0)
    t = np.where(t_pos, hi, lo)
    A, B = 0.0, math.log((n0 + 1.0) / (n1 + 1.0))
    min_step, sigma = 1e-10, 1e-12

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)), (t - 1) * z + np.log1p(np.exp(z)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        ez = np.exp(-np.abs(z))
        p = np.where(z >= 0, ez / (1 + ez), 1 / (1 + ez))
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            log.debug("event=platt_line_search_failed")
            break
    return float(A), float(B)


def sigmoid_predict(decision, A: float, B: float) -> np.ndarray:
    z = np.asarray(decision, dtype=np.float64) * A + B
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, ez / (1 + ez), 1 / (1 + ez))


# --------------------------------------------------------------------------
# model


class SvmModel(Model):
    classifier_id = "svm"

    def __init__(self, params: SvmParams, support: np.ndarray, coef: np.ndarray, b: float,
                 platt: tuple[float, float], n_features: int, violation: float = 0.0):
        self.params = params
        self.support = np.asarray(support, dtype=np.float64).reshape(-1, n_features)
        self.coef = np.asarray(coef, dtype=np.float64)
        self.b = float(b)
        self.platt = (float(platt[0]), float(platt[1]))
        self.n_features = n_features
        self.violation = float(violation)

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        if len(self.coef) == 0:
            return np.full(len(X), self.b)
        return rbf_kernel(X, self.support, self.params.gamma) @ self.coef + self.b

    def predict_proba_array(self, X) -> np.ndarray:
        p_s = sigmoid_predict(self.decision_function(X), *self.platt)
        return np.column_stack([1.0 - p_s, p_s])

    def state(self):
        return {
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
            "b": self.b,
            "platt": list(self.platt),
            "violation": self.violation,
        }

    def params_dict(self):
        return asdict(self.params)

    @classmethod
    def from_state(cls, params, state, n_features):
        return cls(SvmParams(**params), np.array(state["support"]), np.array(state["coef"]),
                   state["b"], tuple(state["platt"]), n_features, state.get("violation", 0.0))


def _signed(y01: np.ndarray) -> np.ndarray:
    return np.where(y01 == 1, 1.0, -1.0)


def _fit_dual(X: np.ndarray, y01: np.ndarray, params: SvmParams, K: np.ndarray | None = None):
    if K is None:
        K = rbf_kernel(X, X, params.gamma)
    res = smo(K, _signed(y01), params.C, params.tolerance, params.max_passes)
    sv = res.alpha > 0
    return X[sv], res.alpha[sv] * _signed(y01)[sv], res.b, res


def _raw_decision(X_train, coef, b, gamma, X):
    if len(coef) == 0:
        return np.full(len(X), b)
    return rbf_kernel(X, X_train, gamma) @ coef + b


def _cv_decision_values(data: LabeledDataset, params: SvmParams, seed: int) -> np.ndarray | None:
    counts = np.bincount(data.y, minlength=2)
    k = min(params.probability_folds, int(counts.min()))
    if k < 2:
        return None
    dec = np.empty(len(data))
    for train_idx, test_idx in stratified_folds(data.y, k, seed):
        ytr = data.y[train_idx]
        if ytr.min() == ytr.max():
            # single-class training split: constant vote for that class
            dec[test_idx] = 1.0 if ytr[0] == 1 else -1.0
            continue
        sv, coef, b, _ = _fit_dual(data.X[train_idx], ytr, params)
        dec[test_idx] = _raw_decision(sv, coef, b, params.gamma, data.X[test_idx])
    return dec


def train_svm(data: LabeledDataset, params: SvmParams = SvmParams(), seed: int = 0) -> SvmModel:
    """Train on ``data``; Platt parameters come from internal stratified CV decision values."""
    data.require_trainable(1)
    sv, coef, b, res = _fit_dual(data.X, data.y, params)
    dec = _cv_decision_values(data, params, split_seed(seed, "platt"))
    if dec is None:
        dec = _raw_decision(sv, coef, b, params.gamma, data.X)
    A, B = fit_sigmoid(dec, data.y == 1)
    return SvmModel(params, sv, coef, b, (A, B), data.feature_dim, res.violation)


# --------------------------------------------------------------------------
# grid search

DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-5, 16, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))


def _binary_f1(pred, truth) -> float:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def grid_scores(data: LabeledDataset, Cs=DEFAULT_C_GRID, gammas=DEFAULT_GAMMA_GRID, folds: int = 5,
                seed: int = 0, base: SvmParams = SvmParams(), executor=None) -> dict[tuple[float, float], float]:
    """Mean internal-CV F-measure (positive class S) for every (C, gamma) cell."""
    k = min(folds, int(np.bincount(data.y, minlength=2).min()))
    if k < 2:
        raise ValueError("grid search needs at least 2 samples per class")
    splits = list(stratified_folds(data.y, k, seed))
    d2 = [(squared_distances(data.X[tr], data.X[tr]), squared_distances(data.X[te], data.X[tr]))
          for tr, te in splits]

    def cell(C, gamma):
        params = SvmParams(C, gamma, base.tolerance, base.max_passes, base.probability_folds)
        scores = []
        for (tr, te), (dtr, dte) in zip(splits, d2):
            ytr = data.y[tr]
            try:
                res = smo(np.exp(-gamma * dtr), _signed(ytr), C, params.tolerance, params.max_passes)
            except SmoConvergenceError as exc:
                log.warning("event=smo_not_converged C=%g gamma=%g violation=%.3g", C, gamma, exc.violation)
                res = exc.result
            dec = np.exp(-gamma * dte) @ (res.alpha * _signed(ytr)) + res.b
            scores.append(_binary_f1((dec > 0).astype(np.int64), data.y[te]))
        return float(np.mean(scores))

    cells = [(C, g) for C in Cs for g in gammas]
    if executor is None:
        values = [cell(C, g) for C, g in cells]
    else:
        values = list(executor.map(lambda cg: cell(*cg), cells))
    return dict(zip(cells, values))


def grid_search_svm(data: LabeledDataset, Cs=DEFAULT_C_GRID, gammas=DEFAULT_GAMMA_GRID, folds: int = 5,
                    seed: int = 0, base: SvmParams = SvmParams(), executor=None) -> SvmParams:
    """Best (C, gamma) by mean internal-CV F-measure; ties go to smaller C, then smaller gamma."""
    if not Cs or not gammas:
        raise ValueError("empty grid")
    scores = grid_scores(data, Cs, gammas, folds, seed, base, executor)
    best = min(scores, key=lambda cg: (-scores[cg], cg[0], cg[1]))
    return SvmParams(best[0], best[1], base.tolerance, base.max_passes, base.probability_folds)
