"""Leave-one-out influence through a reusable Hessian factorization.

Influence is taken with respect to the loss-scaled objective ``J / C``
(summed, unnormalized point losses plus the ridge term ``|w|^2 / (2C)``).
Under that scaling, removing a unit-weight point is a unit downweight, so
``-loo_influence(z)`` estimates how much ``z``'s own loss grows when it is
left out of training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from .dataio import Dataset, LabeledExample
from .exceptions import ConditioningError, DataError, ParameterError
from .linmodel import (
    ModelParams,
    TrainConfig,
    fit_logistic,
    hessian,
    point_gradient,
    point_gradients,
    point_loss,
    point_losses,
)
from .scores import ScoreVector

_JITTER_STEPS = 4


@dataclass(frozen=True, eq=False)
class HessianFactor:
    """Cholesky factor of a symmetric positive-definite matrix.

    ``jitter`` is the multiple of the identity that had to be added before
    the factorization succeeded (0.0 when none was needed).
    """

    cho: tuple
    dim: int
    jitter: float = 0.0

    def solve(self, b) -> np.ndarray:
        return linalg.cho_solve(self.cho, np.asarray(b, dtype=np.float64))


def factorize(H) -> HessianFactor:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {H.shape}")
    if not np.allclose(H, H.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ParameterError("matrix is not symmetric")
    dim = H.shape[0]
    base = 1e-9 * np.trace(H) / dim if np.trace(H) > 0 else 1e-9
    for k in range(_JITTER_STEPS + 1):
        delta = 0.0 if k == 0 else base * 10 ** (k - 1)
        try:
            cho = linalg.cho_factor(H + delta * np.eye(dim), lower=True, check_finite=True)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(cho[0]) > 0):
            return HessianFactor(cho, dim, delta)
    raise ConditioningError("matrix is not positive definite even after jitter")


def loss_hessian_factor(params: ModelParams, data: Dataset, config: TrainConfig) -> HessianFactor:
    """Factor of the Hessian of ``J / C`` at ``params``."""
    return factorize(hessian(params, data, config) / config.C)


def influence_up_loss(params: ModelParams, factor: HessianFactor, z_test: LabeledExample, z: LabeledExample) -> float:
    """Effect of upweighting ``z`` on the loss at ``z_test``."""
    g_test = point_gradient(params, z_test)
    g = point_gradient(params, z)
    return float(-g_test @ factor.solve(g))


def loo_influence(params: ModelParams, factor: HessianFactor, z: LabeledExample) -> float:
    """Influence of ``z`` on its own loss; never positive."""
    return influence_up_loss(params, factor, z, z)


def loo_influences(params: ModelParams, factor: HessianFactor, X, y) -> np.ndarray:
    """Vectorized :func:`loo_influence` over the rows of ``X``."""
    G = point_gradients(params, X, y)
    return -np.einsum("ij,ji->i", G, factor.solve(G.T))


def brute_force_loo(data: Dataset, config: TrainConfig, i: int, params: ModelParams | None = None) -> float:
    """``L(z_i, theta_without_i) - L(z_i, theta)`` by refitting without row ``i``."""
    n = len(data)
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for {n} examples")
    if params is None:
        params = fit_logistic(data, config)
    keep = np.ones(n, dtype=bool)
    keep[i] = False
    reduced = data.subset(np.flatnonzero(keep))
    params_loo = fit_logistic(reduced, config)
    z = data[i]
    return point_loss(params_loo, z) - point_loss(params, z)


def brute_force_loo_all(data: Dataset, config: TrainConfig, params: ModelParams | None = None) -> np.ndarray:
    if params is None:
        params = fit_logistic(data, config)
    return np.array([brute_force_loo(data, config, i, params) for i in range(len(data))])


def score_all(params: ModelParams, factor: HessianFactor | None, data: Dataset, metric: str, model_version=0) -> ScoreVector:
    """Loss or |LOO influence| of every row of ``data``.

    Callers pass the original training points only, never augmented copies.
    """
    if metric == "loss":
        return ScoreVector(point_losses(params, data.X, data.y), "loss", model_version)
    if metric == "influence":
        if factor is None:
            raise ParameterError("influence scores need a Hessian factor")
        vals = np.abs(loo_influences(params, factor, data.X, data.y))
        return ScoreVector(vals, "influence", model_version)
    raise ParameterError(f"score_all handles 'loss' and 'influence', not {metric!r}")


class InfluenceScorer(BaseEstimator):
    """Fit a weighted logistic model and score its training points.

    >>> scorer = InfluenceScorer(metric="influence").fit(X, y)  # doctest: +SKIP
    >>> scorer.scores_.values  # doctest: +SKIP
    """

    def __init__(self, metric="influence", C=10.0, tol=1e-8, max_iter=100):
        self.metric = metric
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        y = np.asarray(y)
        if not np.all(np.isin(y, (-1, 1))):
            classes = np.unique(y)
            if classes.size != 2:
                raise DataError("need exactly two classes")
            y = np.where(y == classes[1], 1, -1)
        data = Dataset(X, y, sample_weight)
        config = TrainConfig(self.C, self.tol, self.max_iter)
        self.params_ = fit_logistic(data, config)
        self.factor_ = loss_hessian_factor(self.params_, data, config) if self.metric == "influence" else None
        self.scores_ = score_all(self.params_, self.factor_, data, self.metric)
        return self

    def transform(self, X=None):
        return self.scores_.values

    def fit_transform(self, X, y, sample_weight=None):
        return self.fit(X, y, sample_weight).scores_.values
