"""Brute-force checks runnable from the command line (``augselect oracle``).

Each suite recomputes something the library does fast by a slow,
independent route: refitting, finite differences, plain gradient descent,
exhaustive enumeration, direct index remapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
from scipy.stats import chisquare

from .dataio import Dataset, LabeledExample, RawImage
from .harness import spearman
from .influence import brute_force_loo_all, loss_hessian_factor, loo_influences
from .linmodel import (
    ModelParams,
    TrainConfig,
    fit_logistic,
    hessian,
    objective,
    objective_gradient,
    point_gradient,
    point_loss,
)
from .selection import (
    build_dpp_kernel,
    elementary_symmetric,
    kdpp_subset_probabilities,
    make_rng,
    sample_kdpp,
    sample_proportional,
    sample_uniform,
)
from .transforms import rotate, translate

SUITES = ("loo", "calculus", "solver", "sampler", "dpp", "transforms")


@dataclass
class OracleResult:
    suite: str
    name: str
    passed: bool
    observed: object
    expected: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}/{self.name}: observed {self.observed}, expected {self.expected}"


def synthetic_dataset(n, d, seed, separation=1.0) -> Dataset:
    """Two overlapping Gaussian classes, both labels guaranteed present."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1, -1)
    y[0], y[1] = 1, -1
    X = rng.normal(size=(n, d)) + separation * y[:, None] / np.sqrt(d)
    return Dataset(X, y)


def gradient_descent_fit(data: Dataset, C, max_steps=1_000_000, gtol=1e-11) -> np.ndarray:
    """Plain fixed-step gradient descent on the logistic objective."""
    X, y, w = data.X, data.y.astype(np.float64), data.w
    Xa = np.hstack([X, np.ones((len(data), 1))])
    L = 0.25 * C * np.linalg.eigvalsh((Xa * w[:, None]).T @ Xa).max() + 1.0
    theta = np.zeros(X.shape[1] + 1)
    for _ in range(max_steps):
        g = objective_gradient(theta, X, y, w, C)
        if np.max(np.abs(g)) < gtol:
            break
        theta -= g / L
    return theta


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def loo_suite(quick=False):
    out = []
    for n, d, seed in ((20, 2, 0), (30, 5, 1), (50, 10, 2)):
        data = synthetic_dataset(n, d, seed)
        config = TrainConfig(C=10.0)
        params = fit_logistic(data, config)
        est = -loo_influences(params, loss_hessian_factor(params, data, config), data.X, data.y)
        truth = brute_force_loo_all(data, config, params)
        rho, _ = spearman(est, truth)
        out.append(OracleResult("loo", f"spearman_n{n}_d{d}", rho >= 0.99, round(rho, 5), ">= 0.99"))
    return out


def calculus_suite(quick=False, h=1e-5):
    rng = np.random.default_rng(7)
    worst_g = 0.0
    for _ in range(20 if quick else 100):
        d = int(rng.integers(1, 6))
        params = ModelParams(rng.normal(size=d), rng.normal())
        z = LabeledExample(rng.normal(size=d), int(rng.choice([-1, 1])))
        theta = params.theta
        fd = np.empty(d + 1)
        for j in range(d + 1):
            e = np.zeros(d + 1)
            e[j] = h
            fd[j] = (point_loss(ModelParams.from_theta(theta + e), z) - point_loss(ModelParams.from_theta(theta - e), z)) / (2 * h)
        worst_g = max(worst_g, _rel(point_gradient(params, z), fd))
    data = synthetic_dataset(25, 4, 3)
    config = TrainConfig(C=10.0)
    worst_h = 0.0
    for _ in range(10 if quick else 100):
        theta = rng.normal(size=5)
        H = hessian(ModelParams.from_theta(theta), data, config)
        fd = np.empty((5, 5))
        for j in range(5):
            e = np.zeros(5)
            e[j] = h
            gp = objective_gradient(theta + e, data.X, data.y.astype(float), data.w, config.C)
            gm = objective_gradient(theta - e, data.X, data.y.astype(float), data.w, config.C)
            fd[:, j] = (gp - gm) / (2 * h)
        worst_h = max(worst_h, _rel(H, fd))
    return [
        OracleResult("calculus", "gradient_fd", worst_g < 1e-6, f"{worst_g:.2e}", "< 1e-6"),
        OracleResult("calculus", "hessian_fd", worst_h < 1e-5, f"{worst_h:.2e}", "< 1e-5"),
    ]


def solver_suite(quick=False):
    out = []
    fixtures = [(20, 2, 0), (20, 2, 1), (30, 3, 2), (40, 5, 3), (25, 4, 4)]
    for n, d, seed in fixtures[: 2 if quick else 5]:
        data = synthetic_dataset(n, d, seed)
        params = fit_logistic(data, TrainConfig(C=10.0))
        ref = gradient_descent_fit(data, 10.0)
        err = float(np.max(np.abs(params.theta - ref)))
        g = objective_gradient(params.theta, data.X, data.y.astype(float), data.w, 10.0)
        out.append(OracleResult("solver", f"gd_n{n}_seed{seed}", err < 1e-6 and np.max(np.abs(g)) <= 1e-8, f"{err:.2e}", "< 1e-6"))
    return out


def sampler_suite(quick=False):
    trials = 20_000 if quick else 200_000
    rng = make_rng(2024, 0, 0)
    s = np.array([2.0, 1.0, 1.0])
    exact = {}
    for a in range(3):
        for b in range(3):
            if a != b:
                exact[(a, b)] = s[a] / s.sum() * s[b] / (s.sum() - s[a])
    counts = dict.fromkeys(exact, 0)
    for _ in range(trials):
        counts[tuple(sample_proportional(s, 2, rng))] += 1
    dev = max(abs(counts[k] / trials - exact[k]) for k in exact)
    tol = 0.015 if quick else 0.005
    pairs = list(combinations(range(5), 2))
    ucounts = dict.fromkeys(pairs, 0)
    for _ in range(trials // 2):
        ucounts[tuple(sorted(sample_uniform(5, 2, rng)))] += 1
    p = float(chisquare(list(ucounts.values())).pvalue)
    return [
        OracleResult("sampler", "proportional_211", dev <= tol, f"{dev:.4f}", f"<= {tol}"),
        OracleResult("sampler", "uniform_chi2", p > 0.001, f"p={p:.4f}", "p > 0.001"),
    ]


def dpp_suite(quick=False):
    out = []
    rng = np.random.default_rng(11)
    worst = 0.0
    for n in range(1, 13):
        lam = rng.integers(0, 5, size=n).astype(float)
        E = elementary_symmetric(lam, n)
        for k in range(n + 1):
            brute = sum(float(np.prod(lam[list(c)])) for c in combinations(range(n), k))
            worst = max(worst, abs(E[k, n] - brute))
    out.append(OracleResult("dpp", "esp_enumeration", worst == 0.0, worst, "== 0"))
    feats = rng.normal(size=(8, 5))
    q = rng.uniform(0.2, 1.0, size=8)
    kernel = build_dpp_kernel(feats, q)
    exact = kdpp_subset_probabilities(kernel.L, 3)
    trials = 20_000 if quick else 200_000
    srng = make_rng(5, 0, 0)
    counts = dict.fromkeys(exact, 0)
    for _ in range(trials):
        counts[tuple(sample_kdpp(kernel, 3, srng))] += 1
    dev = max(abs(counts[s] / trials - exact[s]) for s in exact)
    tol = 0.02 if quick else 0.01
    out.append(OracleResult("dpp", f"kdpp_n8_k3_{comb(8, 3)}subsets", dev <= tol, f"{dev:.4f}", f"<= {tol}"))
    return out


def transforms_suite(quick=False):
    rng = np.random.default_rng(3)
    img = RawImage(rng.integers(0, 256, size=(4, 4), dtype=np.uint8))
    rot = rotate(img, 90).pixels[:, :, 0]
    # counterclockwise quarter turn: out[r, c] = in[c, w-1-r]
    perm = np.array([[img.pixels[c, 3 - r, 0] for c in range(4)] for r in range(4)])
    rot_dev = int(np.max(np.abs(rot.astype(int) - perm.astype(int))))
    big = RawImage(rng.integers(0, 256, size=(7, 9), dtype=np.uint8))
    worst = 0
    for dx in range(-3, 4):
        for dy in range(-3, 4):
            got = translate(big, dx, dy).pixels[:, :, 0]
            want = np.zeros_like(got)
            for r in range(7):
                for c in range(9):
                    sr, sc = r - dy, c - dx
                    if 0 <= sr < 7 and 0 <= sc < 9:
                        want[r, c] = big.pixels[sr, sc, 0]
            worst = max(worst, int(np.sum(got != want)))
    return [
        OracleResult("transforms", "rotate90_permutation", rot_dev <= 1, rot_dev, "<= 1 intensity level"),
        OracleResult("transforms", "translate_remap", worst == 0, worst, "0 differing pixels"),
    ]


_RUNNERS = {
    "loo": loo_suite,
    "calculus": calculus_suite,
    "solver": solver_suite,
    "sampler": sampler_suite,
    "dpp": dpp_suite,
    "transforms": transforms_suite,
}


def run_suites(names=SUITES, quick=False) -> list[OracleResult]:
    results = []
    for name in names:
        results.extend(_RUNNERS[name](quick=quick))
    return results
