"""Subset-selection policies: uniform, score-proportional, top-k, support
vectors, k-means stratified sampling and k-DPP sampling, plus weight
conservation when augmented copies are appended.

Every stochastic function takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dataio import Dataset
from .eigen import jacobi_eigh
from .exceptions import ConditioningError, ParameterError, SizeError
from .scores import METRICS, ScoreVector

POLICY_KINDS = (
    "baseline_uniform",
    "random_proportional",
    "deterministic_topk",
    "vsv",
    "stratified_cluster",
    "kdpp",
)
DETERMINISTIC_KINDS = ("deterministic_topk", "vsv")
DPP_FEATURE_SCALE = 1000.0
KMEANS_MAX_ITER = 300
_JACOBI_MAX_N = 64


def _values(scores):
    return scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)


def _check_k(n, k):
    if k < 0 or k > n:
        raise SizeError(f"cannot select {k} of {n} items")


def make_rng(*key) -> np.random.Generator:
    """Counter-based generator keyed by integers (seed, repeat, purpose...)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def sample_uniform(n, k, rng) -> list[int]:
    _check_k(n, k)
    return [int(i) for i in rng.permutation(n)[:k]]


def _draw(weights, rng):
    cdf = np.cumsum(weights)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), len(weights) - 1)


def sample_proportional(scores, k, rng) -> list[int]:
    """``k`` sequential draws without replacement, each proportional to the
    remaining scores.

    Once the remaining positive mass is exhausted, the rest of the budget is
    filled uniformly from the zero-score items.
    """
    s = _values(scores)
    n = s.shape[0]
    _check_k(n, k)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ParameterError("scores must be finite and nonnegative")
    remaining = np.ones(n, dtype=bool)
    out = []
    for _ in range(k):
        mass = np.where(remaining, s, 0.0)
        if mass.sum() > 0:
            i = _draw(mass, rng)
        else:
            pool = np.flatnonzero(remaining)
            i = int(pool[rng.integers(pool.size)])
        out.append(i)
        remaining[i] = False
    return out


def select_topk(scores, k) -> list[int]:
    """Indices of the ``k`` largest scores, descending, ties by ascending index."""
    s = _values(scores)
    _check_k(s.shape[0], k)
    order = np.lexsort((np.arange(s.shape[0]), -s))
    return [int(i) for i in order[:k]]


def invert_scores(scores: ScoreVector) -> ScoreVector:
    """``1 / (s + eps)`` with ``eps = 1e-12 * max(s)`` (``1e-12`` if all zero)."""
    s = _values(scores)
    top = s.max() if s.size else 0.0
    eps = 1e-12 * top if top > 0 else 1e-12
    metric = scores.metric if isinstance(scores, ScoreVector) else "uniform"
    version = scores.model_version if isinstance(scores, ScoreVector) else 0
    if not metric.endswith("_inverse"):
        metric = metric + "_inverse"
    return ScoreVector(1.0 / (s + eps), metric, version)


def vsv_select(svm) -> list[int]:
    """The support-vector indices, ascending. The budget is not adjustable."""
    return sorted(int(i) for i in svm.support_indices)


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(X, X[centers])[:, 0]
    for _ in range(1, k):
        mass = closest.copy()
        mass[centers] = 0.0
        if mass.sum() > 0:
            i = _draw(mass, rng)
        else:
            pool = np.setdiff1d(np.arange(n), centers)
            i = int(pool[rng.integers(pool.size)])
        centers.append(i)
        closest = np.minimum(closest, _sq_dists(X, X[[i]])[:, 0])
    return X[centers].copy()


def _repair_empty(X, assign, centroids):
    k = centroids.shape[0]
    counts = np.bincount(assign, minlength=k)
    for j in np.flatnonzero(counts == 0):
        d = ((X - centroids[assign]) ** 2).sum(1)
        d[counts[assign] <= 1] = -1.0
        i = int(np.argmax(d))
        counts[assign[i]] -= 1
        assign[i] = j
        counts[j] = 1
        centroids[j] = X[i]
    return assign


def kmeans(features, k, seed):
    """Lloyd's algorithm from a k-means++ start.

    Stops at an assignment fixpoint or after 300 iterations. A cluster that
    empties takes over the point farthest from its own centroid.
    Returns ``(assignments, centroids)``.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if k < 1 or k > n:
        raise SizeError(f"cannot form {k} clusters from {n} points")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    centroids = _kmeanspp(X, k, rng)
    assign = None
    for _ in range(KMEANS_MAX_ITER):
        new = np.argmin(_sq_dists(X, centroids), axis=1)
        new = _repair_empty(X, new, centroids)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            centroids[j] = X[assign == j].mean(axis=0)
    return assign, centroids


def distortion(features, assignments, centroids) -> float:
    X = np.asarray(features, dtype=np.float64)
    return float(((X - centroids[assignments]) ** 2).sum())


def stratified_select(assignments, scores, rng) -> list[int]:
    """One index per cluster, uniform within it or proportional to ``scores``.

    Clusters are visited in label order. Pass ``scores=None`` for uniform.
    """
    assignments = np.asarray(assignments)
    k = int(assignments.max()) + 1 if assignments.size else 0
    s = None if scores is None else _values(scores)
    out = []
    for c in range(k):
        members = np.flatnonzero(assignments == c)
        if members.size == 0:
            raise RuntimeError(f"cluster {c} is empty")
        if s is None or s[members].sum() <= 0:
            out.append(int(members[rng.integers(members.size)]))
        else:
            out.append(int(members[_draw(s[members], rng)]))
    return out


@dataclass(frozen=True, eq=False)
class DppKernel:
    L: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.L.shape[0]

    def rank(self, rtol=1e-10) -> int:
        top = self.eigenvalues[0] if self.eigenvalues.size else 0.0
        return int(np.sum(self.eigenvalues > rtol * top)) if top > 0 else 0


def decompose_kernel(L, method="auto") -> DppKernel:
    L = np.asarray(L, dtype=np.float64)
    L = 0.5 * (L + L.T)
    if method == "auto":
        method = "jacobi" if L.shape[0] <= _JACOBI_MAX_N else "lapack"
    try:
        if method == "jacobi":
            vals, vecs = jacobi_eigh(L)
        elif method == "lapack":
            vals, vecs = np.linalg.eigh(L)
            vals, vecs = vals[::-1], vecs[:, ::-1]
        else:
            raise ParameterError(f"unknown eigen method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"eigendecomposition failed: {exc}") from None
    vals = np.maximum(vals, 0.0)
    return DppKernel(L, vals, vecs)


def build_dpp_kernel(features, qualities, method="auto") -> DppKernel:
    """``L_ij = q_i q_j phi_i.phi_j`` with ``phi_i = 1000 * x_i / |x_i|``.

    A zero feature vector is replaced by the first unit axis.
    """
    X = np.array(features, dtype=np.float64)
    q = _values(qualities)
    if np.any(q < 0):
        raise ParameterError("qualities must be nonnegative")
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    X[zero] = 0.0
    X[zero, 0] = 1.0
    norms[zero] = 1.0
    B = DPP_FEATURE_SCALE * X / norms[:, None] * q[:, None]
    return decompose_kernel(B @ B.T, method)


def elementary_symmetric(eigenvalues, k) -> np.ndarray:
    """Table ``E[l, m] = e_l(lambda_1..lambda_m)`` for ``l <= k``, ``m <= n``."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    n = lam.shape[0]
    _check_k(n, k)
    E = np.zeros((k + 1, n + 1))
    E[0, :] = 1.0
    for m in range(1, n + 1):
        E[1:, m] = E[1:, m - 1] + lam[m - 1] * E[:-1, m - 1]
    return E


def log_elementary_symmetric(eigenvalues, k) -> np.ndarray:
    """``log`` of :func:`elementary_symmetric`, computed without overflow."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    n = lam.shape[0]
    _check_k(n, k)
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    logE = np.full((k + 1, n + 1), -np.inf)
    logE[0, :] = 0.0
    for m in range(1, n + 1):
        logE[1:, m] = np.logaddexp(logE[1:, m - 1], loglam[m - 1] + logE[:-1, m - 1])
    return logE


def sample_kdpp(kernel: DppKernel, k, rng) -> list[int]:
    """Exact k-DPP sample (sorted indices).

    First picks ``k`` eigenvectors through the elementary symmetric
    polynomial recursion, then draws items one at a time from the spanned
    subspace, projecting it onto the complement of each chosen item.
    """
    lam = kernel.eigenvalues
    n = lam.shape[0]
    _check_k(n, k)
    if k == 0:
        return []
    if k > kernel.rank():
        raise SizeError(f"k={k} exceeds the kernel rank {kernel.rank()}")
    logE = log_elementary_symmetric(lam, k)
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    chosen = []
    rem = k
    for m in range(n, 0, -1):
        if rem == 0:
            break
        if m == rem:
            marg = 1.0
        else:
            marg = np.exp(loglam[m - 1] + logE[rem - 1, m - 1] - logE[rem, m])
        if rng.random() < marg:
            chosen.append(m - 1)
            rem -= 1
    V = kernel.eigenvectors[:, chosen].copy()
    items = []
    while V.shape[1] > 0:
        p = (V * V).sum(axis=1)
        p[items] = 0.0
        if not p.sum() > 0:
            raise ConditioningError("k-DPP projection lost all mass")
        i = _draw(p, rng)
        items.append(i)
        j = int(np.argmax(np.abs(V[i])))
        vj = V[:, j]
        V = np.delete(V, j, axis=1)
        if V.shape[1]:
            V = V - np.outer(vj, V[i] / vj[i])
            V, r = np.linalg.qr(V)
            if np.any(np.abs(np.diag(r)) < 1e-12):
                raise ConditioningError("k-DPP subspace became degenerate")
    return sorted(items)


def kdpp_subset_probabilities(L, k) -> dict[tuple, float]:
    """Exact ``det(L_S) / sum det(L_S')`` over all size-``k`` subsets."""
    L = np.asarray(L, dtype=np.float64)
    subsets = list(combinations(range(L.shape[0]), k))
    dets = np.array([np.linalg.det(L[np.ix_(s, s)]) if k else 1.0 for s in subsets])
    dets = np.maximum(dets, 0.0)
    return dict(zip(subsets, dets / dets.sum()))


def family_weight(w0, m, literal=False) -> float:
    """Weight each of origin and its ``m`` copies receive when downweighting."""
    return w0 / (m if literal else m + 1)


def apply_downweight(data: Dataset, family, literal=False) -> Dataset:
    """Append ``family`` and split the origin's weight evenly over the family.

    The origin is the first row whose origin id matches. The divisor is
    ``m + 1`` (origin plus copies), which conserves total weight;
    ``literal=True`` divides by ``m`` instead.
    """
    rows = np.flatnonzero(data.origin == family.origin_id)
    if rows.size == 0:
        raise IndexError(f"origin {family.origin_id} not in dataset")
    r = rows[0]
    m = len(family)
    share = family_weight(data.w[r], m, literal)
    w = data.w.copy()
    w[r] = share
    members = Dataset(
        family.X,
        np.full(m, data.y[r]),
        np.full(m, share),
        np.full(m, family.origin_id),
        list(family.images) if family.images is not None and data.images is not None else None,
    )
    return data.with_weights(w).concat(members)


def append_family(data: Dataset, family) -> Dataset:
    """Append ``family`` keeping the origin's weight on every copy."""
    rows = np.flatnonzero(data.origin == family.origin_id)
    if rows.size == 0:
        raise IndexError(f"origin {family.origin_id} not in dataset")
    r = rows[0]
    m = len(family)
    members = Dataset(
        family.X, np.full(m, data.y[r]), np.full(m, data.w[r]), np.full(m, family.origin_id),
        list(family.images) if family.images is not None and data.images is not None else None,
    )
    return data.concat(members)


@dataclass(frozen=True)
class PolicyConfig:
    """How an experiment picks the next points to augment.

    ``metric`` is ignored by ``baseline_uniform`` and ``vsv``. ``kdpp``
    and ``stratified_cluster`` use it as point quality (``uniform`` for
    none).
    """

    kind: str
    metric: str = "uniform"
    update_scores: bool = False
    downweight: bool = False
    inverse: bool = False
    seed: int = 0
    literal_downweight: bool = False
    name: str = ""

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ParameterError(f"unknown policy kind {self.kind!r}; known: {POLICY_KINDS}")
        if self.metric not in METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}; known: {METRICS}")
        if self.kind in ("baseline_uniform", "vsv"):
            object.__setattr__(self, "metric", "uniform")
            object.__setattr__(self, "inverse", False)
        if self.kind in ("random_proportional", "deterministic_topk") and self.metric == "uniform":
            raise ParameterError(f"{self.kind} needs a score metric")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self):
        parts = [self.kind]
        if self.metric != "uniform":
            parts.append(self.metric)
        for flag in ("inverse", "update_scores", "downweight"):
            if getattr(self, flag):
                parts.append(flag)
        return ":".join(parts)

    @property
    def stochastic(self) -> bool:
        return self.kind not in DETERMINISTIC_KINDS

    def to_dict(self):
        return {
            "kind": self.kind,
            "metric": self.metric,
            "update_scores": self.update_scores,
            "downweight": self.downweight,
            "inverse": self.inverse,
            "seed": self.seed,
            "literal_downweight": self.literal_downweight,
            "name": self.name,
        }
