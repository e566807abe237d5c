"""Weighted L2-regularized logistic regression and a linear hinge-loss SVM.

The logistic objective is

    J(w, b) = C * sum_i w_i * log(1 + exp(-y_i * (w.x_i + b))) + 0.5 * |w|^2

with the bias left unregularized. It is minimized by damped Newton steps from
zero, so repeated fits on the same rows are bit-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import KFold
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from .dataio import Dataset, LabeledExample
from .exceptions import ConvergenceError, DataError, FormatError, ParameterError
from .scores import ScoreVector

DEFAULT_SVM_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
SUPPORT_TOL = 1e-6
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ModelParams:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise DataError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def theta(self) -> np.ndarray:
        """Weights followed by the bias."""
        return np.append(self.weights, self.bias)

    @classmethod
    def from_theta(cls, theta):
        return cls(theta[:-1], theta[-1])

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def save(self, path):
        """Plain text: a magic line, ``bias <value>``, ``weights <d>``, one weight per line."""
        lines = ["# augselect-model v1", f"bias {self.bias!r}", f"weights {self.weights.size}"]
        lines += [repr(float(v)) for v in self.weights]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        try:
            if lines[0] != "# augselect-model v1":
                raise FormatError(f"{path}: not a model file")
            key, bias = lines[1].split()
            key2, d = lines[2].split()
            if key != "bias" or key2 != "weights":
                raise FormatError(f"{path}: malformed header")
            weights = [float(v) for v in lines[3:]]
            if len(weights) != int(d):
                raise FormatError(f"{path}: expected {d} weights, found {len(weights)}")
            return cls(np.array(weights), float(bias))
        except (IndexError, ValueError):
            raise FormatError(f"{path}: malformed model file") from None


@dataclass(frozen=True)
class TrainConfig:
    C: float = 10.0
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        if not self.C > 0 or not np.isfinite(self.C):
            raise ParameterError("C must be positive and finite")
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be at least 1")


def _softplus_neg(m):
    """log(1 + exp(-m)) without overflow."""
    return np.maximum(-m, 0.0) + np.log1p(np.exp(-np.abs(m)))


def point_losses(params: ModelParams, X, y) -> np.ndarray:
    return _softplus_neg(np.asarray(y) * params.decision_function(X))


def point_loss(params: ModelParams, z: LabeledExample) -> float:
    """Unweighted, unregularized log-loss of one example."""
    return float(point_losses(params, np.atleast_2d(z.features), [z.label])[0])


def point_gradients(params: ModelParams, X, y) -> np.ndarray:
    """Rows are the gradients of each point's loss w.r.t. (weights, bias)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    r = -y * expit(-y * params.decision_function(X))
    return np.hstack([X * r[:, None], r[:, None]])


def point_gradient(params: ModelParams, z: LabeledExample) -> np.ndarray:
    return point_gradients(params, np.atleast_2d(z.features), [z.label])[0]


def objective(theta, X, y, w, C) -> float:
    m = y * (X @ theta[:-1] + theta[-1])
    return float(C * np.dot(w, _softplus_neg(m)) + 0.5 * np.dot(theta[:-1], theta[:-1]))


def objective_gradient(theta, X, y, w, C) -> np.ndarray:
    m = y * (X @ theta[:-1] + theta[-1])
    r = C * w * (-y * expit(-m))
    g = np.empty_like(theta)
    g[:-1] = X.T @ r + theta[:-1]
    g[-1] = r.sum()
    return g


def _hessian(theta, X, y, w, C) -> np.ndarray:
    n, d = X.shape
    f = X @ theta[:-1] + theta[-1]
    s = C * w * expit(f) * expit(-f)
    H = np.zeros((d + 1, d + 1))
    for start in range(0, n, _CHUNK):
        Xc, sc = X[start:start + _CHUNK], s[start:start + _CHUNK]
        Xs = Xc * sc[:, None]
        H[:d, :d] += Xs.T @ Xc
        H[:d, d] += Xs.sum(axis=0)
        H[d, d] += sc.sum()
    H[d, :d] = H[:d, d]
    H[np.arange(d), np.arange(d)] += 1.0
    return H


def hessian(params: ModelParams, data: Dataset, config: TrainConfig) -> np.ndarray:
    """Hessian of the full regularized objective at ``params``."""
    return _hessian(params.theta, data.X, data.y.astype(np.float64), data.w, config.C)


def _newton(X, y, w, C, tol, max_iter):
    d = X.shape[1]
    theta = np.zeros(d + 1)
    J = objective(theta, X, y, w, C)
    g = objective_gradient(theta, X, y, w, C)
    for it in range(max_iter + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return theta, it
        if it == max_iter:
            break
        H = _hessian(theta, X, y, w, C)
        try:
            step = -linalg.cho_solve(linalg.cho_factor(H), g)
        except linalg.LinAlgError:
            step = -linalg.lstsq(H, g)[0]
        slope = float(g @ step)
        t = 1.0
        # below the objective's rounding level Armijo can only stall; take the full step
        if -slope <= 1e-11 * max(1.0, abs(J)):
            theta = theta + step
            J = objective(theta, X, y, w, C)
            g = objective_gradient(theta, X, y, w, C)
            continue
        for _ in range(60):
            cand = theta + t * step
            Jc = objective(cand, X, y, w, C)
            if Jc <= J + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # near the optimum J stops resolving; accept a full step if it shrinks the gradient
            cand = theta + step
            gc = objective_gradient(cand, X, y, w, C)
            if np.max(np.abs(gc)) >= gnorm:
                raise ConvergenceError(f"line search failed at |grad|={gnorm:.3e}", gnorm)
            Jc = objective(cand, X, y, w, C)
        theta, J = cand, Jc
        g = objective_gradient(theta, X, y, w, C)
    raise ConvergenceError(
        f"no convergence within {max_iter} Newton steps (|grad|={gnorm:.3e})", gnorm
    )


def fit_logistic(data: Dataset, config: TrainConfig = TrainConfig()) -> ModelParams:
    """Minimize the weighted objective to ``max|grad| <= config.tol``."""
    data.check_fittable()
    theta, _ = _newton(data.X, data.y.astype(np.float64), data.w, config.C, config.tol, config.max_iter)
    return ModelParams.from_theta(theta)


def accuracy(params, data: Dataset) -> float:
    """Unweighted fraction classified correctly; a zero decision value counts as +1."""
    if len(data) == 0:
        raise DataError("cannot score an empty dataset")
    pred = np.where(params.decision_function(data.X) >= 0, 1, -1)
    return float(np.mean(pred == data.y))


def _fold_scores(data, grid, folds, seed, fit):
    if folds < 2:
        raise ParameterError("need at least 2 folds")
    if len(data) < folds:
        raise DataError(f"{len(data)} examples cannot fill {folds} folds")
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed % (2**32))
    scores = {C: [] for C in grid}
    for k, (tr, te) in enumerate(splitter.split(data.X)):
        train = data.subset(tr)
        if set(np.unique(train.y[train.w > 0]).tolist()) != {-1, 1}:
            warnings.warn(f"fold {k} skipped: its training part has a single class")
            continue
        for C in grid:
            scores[C].append(accuracy(fit(train, C), data.subset(te)))
    if not scores[grid[0]]:
        raise DataError("every cross-validation fold was skipped")
    return {C: float(np.mean(v)) for C, v in scores.items()}


def _best_C(mean_scores):
    # ascending grid, strict > keeps the smaller C on ties
    best = None
    for C in sorted(mean_scores):
        if best is None or mean_scores[C] > mean_scores[best]:
            best = C
    return best


def _check_grid(grid):
    grid = sorted({float(c) for c in grid})
    if not grid:
        raise ParameterError("C grid is empty")
    if any(not c > 0 for c in grid):
        raise ParameterError("C grid entries must be positive")
    return grid


def cross_validate_C(data: Dataset, grid, folds=5, seed=0, config: TrainConfig = TrainConfig()) -> float:
    """Grid value with the best mean held-out accuracy; ties go to the smaller C."""
    grid = _check_grid(grid)
    if len(grid) == 1:
        return grid[0]

    def fit(train, C):
        return fit_logistic(train, TrainConfig(C, config.tol, config.max_iter))

    return _best_C(_fold_scores(data, grid, folds, seed, fit))


@dataclass(frozen=True, eq=False)
class SvmFit:
    weights: np.ndarray
    bias: float
    support_indices: np.ndarray
    chosen_C: float
    dual_coef: np.ndarray = field(default=None, repr=False)

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


def _svm_dual_cd(X, y, upper, tol, max_iter, seed):
    """Dual coordinate descent for the L1-loss SVM with a constant bias feature.

    ``upper`` holds the per-example box constraint ``C * w_i``.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    qdiag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    wa = np.zeros(d + 1)
    rng = np.random.Generator(np.random.Philox(seed))
    active = np.flatnonzero(upper > 0)
    for epoch in range(max_iter):
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(active):
            G = y[i] * (Xa[i] @ wa) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(G, 0.0)
            elif a >= upper[i]:
                pg = max(G, 0.0)
            else:
                pg = G
            pg_max, pg_min = max(pg_max, pg), min(pg_min, pg)
            if pg != 0.0:
                new = min(max(a - G / qdiag[i], 0.0), upper[i])
                if new != a:
                    wa += (new - a) * y[i] * Xa[i]
                    alpha[i] = new
        if pg_max - pg_min <= tol:
            return wa, alpha, epoch + 1
    raise ConvergenceError(
        f"SVM dual coordinate descent did not converge in {max_iter} epochs", pg_max - pg_min
    )


def _fit_svm_fixed(data: Dataset, C, tol=1e-8, max_iter=20000, seed=0) -> SvmFit:
    data.check_fittable()
    y = data.y.astype(np.float64)
    wa, alpha, _ = _svm_dual_cd(data.X, y, C * data.w, tol, max_iter, seed)
    margins = y * (data.X @ wa[:-1] + wa[-1])
    support = np.flatnonzero(margins <= 1.0 + SUPPORT_TOL)
    return SvmFit(wa[:-1].copy(), float(wa[-1]), support, float(C), alpha)


def fit_svm(data: Dataset, grid=DEFAULT_SVM_GRID, folds=5, seed=0) -> SvmFit:
    """Linear SVM with C picked by cross-validated accuracy, refit on all data.

    Support vectors are the points with ``y * f(x) <= 1 + 1e-6``.
    """
    grid = _check_grid(grid)
    if len(grid) == 1:
        return _fit_svm_fixed(data, grid[0], seed=seed)
    best = _best_C(_fold_scores(data, grid, folds, seed, lambda tr, C: _fit_svm_fixed(tr, C, seed=seed)))
    return _fit_svm_fixed(data, best, seed=seed)


def margin_scores(svm: SvmFit, data: Dataset, variant="absolute") -> ScoreVector:
    """``|f(x)|``, or its regularized reciprocal for ``variant='inverse'``."""
    f = np.abs(svm.decision_function(data.X))
    if variant == "absolute":
        return ScoreVector(f, "margin_abs")
    if variant == "inverse":
        top = f.max() if f.size else 0.0
        eps = 1e-12 * top if top > 0 else 1e-12
        return ScoreVector(1.0 / (f + eps), "margin_inv")
    raise ParameterError(f"unknown margin variant {variant!r}")


def _pm_labels(y, classes):
    return np.where(y == classes[1], 1, -1)


class WeightedLogisticRegression(ClassifierMixin, BaseEstimator):
    """scikit-learn style wrapper around :func:`fit_logistic`.

    The larger of the two class labels is the positive class. ``params_``
    holds the fitted :class:`ModelParams`.
    """

    def __init__(self, C=10.0, tol=1e-8, max_iter=100):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise DataError(f"need exactly two classes, got {self.classes_.size}")
        data = Dataset(X, _pm_labels(y, self.classes_), sample_weight)
        self.params_ = fit_logistic(data, TrainConfig(self.C, self.tol, self.max_iter))
        self.coef_ = self.params_.weights.reshape(1, -1)
        self.intercept_ = np.array([self.params_.bias])
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return self.params_.decision_function(X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def point_losses(self, X, y):
        check_is_fitted(self)
        return point_losses(self.params_, X, _pm_labels(np.asarray(y), self.classes_))


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Linear hinge-loss SVM trained by dual coordinate descent.

    The bias is handled as an extra constant feature, so it is regularized
    along with the weights. ``support_`` lists the support-vector indices.
    """

    def __init__(self, C=1.0, tol=1e-8, max_iter=20000, random_state=0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise DataError(f"need exactly two classes, got {self.classes_.size}")
        data = Dataset(X, _pm_labels(y, self.classes_), sample_weight)
        fit = _fit_svm_fixed(data, self.C, self.tol, self.max_iter, self.random_state)
        self.fit_ = fit
        self.coef_ = fit.weights.reshape(1, -1)
        self.intercept_ = np.array([fit.bias])
        self.support_ = fit.support_indices
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return self.fit_.decision_function(X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]
