"""Round-based augment, retrain and evaluate experiments, and their metrics.

A repeat starts from the un-augmented training set (budget 0). Each round a
policy picks one source point that has not been augmented yet and its whole
augmentation family is added. The model is refit and scored on the poisoned
test set only at checkpoint budgets.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import norm, rankdata

from . import dataio
from .dataio import Dataset
from .exceptions import AugselectError, ConfigError, MetricError, SizeError
from .influence import loss_hessian_factor, score_all
from .linmodel import (
    DEFAULT_SVM_GRID,
    TrainConfig,
    accuracy,
    cross_validate_C,
    fit_logistic,
    fit_svm,
    margin_scores,
)
from .scores import ScoreVector
from .selection import (
    PolicyConfig,
    build_dpp_kernel,
    family_weight,
    invert_scores,
    kmeans,
    make_rng,
    sample_kdpp,
    sample_proportional,
    sample_uniform,
    select_topk,
    stratified_select,
    vsv_select,
)
from .transforms import TransformSpec, build_poisoned_test, family_features

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (0, 1, 2, 5, 10, 25, 50, 100, 250, 500, 750)
_PURPOSE_SELECT = 1
_PURPOSE_CLUSTER = 2
_PURPOSE_CV = 3


# metrics ----------------------------------------------------------------


@dataclass
class AccuracyCurve:
    budgets: list
    accuracies: list
    total_weights: list = field(default_factory=list)

    def __post_init__(self):
        if list(self.budgets) != sorted(self.budgets):
            raise MetricError("curve budgets must be ascending")
        if any(not 0.0 <= a <= 1.0 for a in self.accuracies):
            raise MetricError("accuracies must lie in [0, 1]")

    def at(self, budget):
        return self.accuracies[self.budgets.index(budget)]


def auc(curve) -> float:
    """Trapezoidal area under accuracy over the budget axis."""
    budgets = np.asarray(curve.budgets, dtype=np.float64)
    acc = np.asarray(curve.accuracies, dtype=np.float64)
    if budgets.size < 2:
        raise MetricError("AUC needs at least two checkpoints")
    return float(np.sum(np.diff(budgets) * (acc[1:] + acc[:-1]) / 2.0))


def spearman(a, b):
    """Spearman rank correlation and a normal-approximation p-value.

    Returns ``(rho, p)``; ``p`` comes from ``t = rho * sqrt((n-2)/(1-rho^2))``
    compared against a standard normal, so it is approximate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("spearman needs two vectors of equal length")
    n = a.size
    if n < 3:
        raise MetricError("spearman needs at least 3 observations")
    ra, rb = rankdata(a), rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0:
        raise MetricError("rank correlation undefined for a constant vector")
    rho = float(np.clip((ra * rb).sum() / denom, -1.0, 1.0))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * norm.sf(abs(t)))


def score_histogram(scores, bins=20):
    """Equal-width histogram over ``[min, max]``; returns ``(edges, counts)``."""
    if bins < 1:
        raise MetricError("bins must be at least 1")
    s = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)
    counts, edges = np.histogram(s, bins=bins)
    return edges, counts


def confidence_interval(samples, level=0.95):
    """``mean +/- z * sd / sqrt(n)`` with a normal quantile ``z``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise MetricError("a confidence interval needs at least 2 samples")
    z = norm.ppf(0.5 + level / 2.0)
    half = z * x.std(ddof=1) / np.sqrt(x.size)
    m = x.mean()
    return float(m - half), float(m + half)


# configuration ----------------------------------------------------------


@dataclass(frozen=True)
class TrainSettings:
    C: float = 10.0
    C_grid: tuple | None = None
    folds: int = 5
    tol: float = 1e-8
    max_iter: int = 100


@dataclass
class ExperimentConfig:
    dataset: dict
    transform: TransformSpec
    policies: list
    budget: int | None = None
    checkpoints: list | None = None
    repeats: int = 5
    seed: int = 0
    train: TrainSettings = TrainSettings()
    svm_grid: tuple = DEFAULT_SVM_GRID
    svm_folds: int = 5
    histogram_bins: int = 20

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats: must be at least 1")
        if not self.policies:
            raise ConfigError("policies: at least one policy is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ConfigError(f"policies: duplicate policy names {names}")

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "transform": self.transform.to_dict(),
            "policies": [p.to_dict() for p in self.policies],
            "budget": self.budget,
            "checkpoints": self.checkpoints,
            "repeats": self.repeats,
            "seed": self.seed,
            "train": {
                "C": self.train.C,
                "C_grid": list(self.train.C_grid) if self.train.C_grid else None,
                "folds": self.train.folds,
                "tol": self.train.tol,
                "max_iter": self.train.max_iter,
            },
            "svm_grid": list(self.svm_grid),
            "svm_folds": self.svm_folds,
            "histogram_bins": self.histogram_bins,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_TOP_KEYS = {
    "dataset", "transform", "policy", "policies", "budget", "checkpoints", "repeats",
    "seed", "train", "svm_grid", "svm_folds", "histogram_bins",
}
_POLICY_KEYS = {"kind", "metric", "update_scores", "downweight", "inverse", "seed", "literal_downweight", "name"}
_TRAIN_KEYS = {"C", "C_grid", "folds", "tol", "max_iter"}


def _keyed(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return section


def config_from_dict(raw) -> ExperimentConfig:
    raw = _keyed(raw, _TOP_KEYS, "config")
    for key in ("dataset", "transform"):
        if key not in raw:
            raise ConfigError(f"{key}: missing")
    policies_raw = raw.get("policies", [raw["policy"]] if "policy" in raw else None)
    if not policies_raw:
        raise ConfigError("policies: missing")
    try:
        transform = TransformSpec.from_dict(_keyed(raw["transform"], {"kind", "params", "preset"}, "transform"))
    except AugselectError as exc:
        raise ConfigError(f"transform: {exc}") from None
    policies = []
    for i, p in enumerate(policies_raw):
        try:
            policies.append(PolicyConfig(**_keyed(p, _POLICY_KEYS, f"policies[{i}]")))
        except AugselectError as exc:
            raise ConfigError(f"policies[{i}]: {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"policies[{i}]: {exc}") from None
    train_raw = _keyed(raw.get("train", {}), _TRAIN_KEYS, "train")
    grid = train_raw.get("C_grid")
    train = TrainSettings(
        C=float(train_raw.get("C", 10.0)),
        C_grid=tuple(float(c) for c in grid) if grid else None,
        folds=int(train_raw.get("folds", 5)),
        tol=float(train_raw.get("tol", 1e-8)),
        max_iter=int(train_raw.get("max_iter", 100)),
    )
    try:
        return ExperimentConfig(
            dataset=_keyed(raw["dataset"], _DATASET_KEYS, "dataset"),
            transform=transform,
            policies=policies,
            budget=None if raw.get("budget") is None else int(raw["budget"]),
            checkpoints=None if raw.get("checkpoints") is None else [int(c) for c in raw["checkpoints"]],
            repeats=int(raw.get("repeats", 5)),
            seed=int(raw.get("seed", 0)),
            train=train,
            svm_grid=tuple(float(c) for c in raw.get("svm_grid", DEFAULT_SVM_GRID)),
            svm_folds=int(raw.get("svm_folds", 5)),
            histogram_bins=int(raw.get("histogram_bins", 20)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment config."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    base = Path(path).parent
    if isinstance(raw, dict) and isinstance(raw.get("dataset"), dict):
        for key in _PATH_KEYS:
            if key in raw["dataset"]:
                p = Path(raw["dataset"][key])
                raw["dataset"][key] = str(p if p.is_absolute() else base / p)
    return config_from_dict(raw)


# tasks ------------------------------------------------------------------

_PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels", "train", "train_augmented", "test", "test_augmented")
_DATASET_KEYS = set(_PATH_KEYS) | {"source", "classes", "n_train", "n_test", "seed"}


@dataclass
class ExperimentTask:
    """Everything a repeat needs: original training points, each point's
    augmentation family as an ``(m, d)`` feature block, and the poisoned
    test set."""

    train: Dataset
    families: list
    test: Dataset
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.families) != len(self.train):
            raise ConfigError("dataset: need one augmentation family per training point")
        for i, fam in enumerate(self.families):
            if fam.ndim != 2 or fam.shape[1] != self.train.feature_dim or fam.shape[0] == 0:
                raise ConfigError(f"dataset: augmentation family {i} has shape {fam.shape}")

    @property
    def n(self):
        return len(self.train)


def task_from_images(train: Dataset, test_pairs, spec: TransformSpec, meta=None) -> ExperimentTask:
    if train.images is None:
        raise ConfigError("dataset: training set carries no images to augment")
    return ExperimentTask(
        train.subset(np.arange(len(train))).with_weights(np.ones(len(train))),
        family_features(spec, train.images),
        build_poisoned_test(test_pairs, spec),
        dict(meta or train.meta),
    )


def _draw_test(test_pairs, n_test, seed):
    if n_test is None or n_test >= len(test_pairs):
        return test_pairs
    rng = make_rng(seed, 0, 99)
    keep = np.sort(rng.choice(len(test_pairs), size=int(n_test), replace=False))
    return [test_pairs[i] for i in keep]


def prepare_task(dataset: dict, spec: TransformSpec) -> ExperimentTask:
    """Build the task described by a config's ``dataset`` section.

    Sources: ``mnist5k`` (the bundled subset, test drawn from the unused
    examples of the two classes), ``idx`` (train/test IDX file pairs) and
    ``features`` (feature CSVs plus companion augmented-feature CSVs).
    """
    source = dataset.get("source")
    if source in ("mnist5k", "idx"):
        classes = dataset.get("classes", [3, 8])
        if len(classes) != 2:
            raise ConfigError("dataset.classes: need exactly two classes")
        a, b = int(classes[0]), int(classes[1])
        n_train = int(dataset.get("n_train", 1000))
        seed = int(dataset.get("seed", 0))
        if source == "mnist5k":
            pairs = dataio.load_mnist5k()
            train = dataio.make_binary_task(pairs, a, b, n_train, seed)
            test_pairs = dataio.binary_test_pairs(pairs, a, b, exclude=train.meta["source_positions"])
        else:
            try:
                pairs = dataio.load_idx(dataset["train_images"], dataset["train_labels"])
                test_raw = dataio.load_idx(dataset["test_images"], dataset["test_labels"])
            except KeyError as exc:
                raise ConfigError(f"dataset.{exc.args[0]}: missing") from None
            train = dataio.make_binary_task(pairs, a, b, n_train, seed)
            test_pairs = dataio.binary_test_pairs(test_raw, a, b)
        test_pairs = _draw_test(test_pairs, dataset.get("n_test"), seed)
        if not test_pairs:
            raise SizeError("dataset: no test examples left")
        meta = dict(train.meta)
        meta.pop("source_positions", None)
        meta["test_class_split"] = [sum(1 for _, l in test_pairs if l == 1), sum(1 for _, l in test_pairs if l == -1)]
        return task_from_images(train, test_pairs, spec, meta)
    if source == "features":
        try:
            train = dataio.load_feature_csv(dataset["train"])
            fams = dataio.load_augmented_csv(dataset["train_augmented"])
            test = dataio.load_feature_csv(dataset["test"])
            test_fams = dataio.load_augmented_csv(dataset["test_augmented"]) if "test_augmented" in dataset else {}
        except KeyError as exc:
            raise ConfigError(f"dataset.{exc.args[0]}: missing") from None
        missing = [i for i in range(len(train)) if i not in fams]
        if missing:
            raise ConfigError(f"dataset.train_augmented: no rows for origin ids {missing[:5]}...")
        families = [fams[i] for i in range(len(train))]
        extra = [
            Dataset(test_fams[i], np.full(len(test_fams[i]), test.y[i]), origin=np.full(len(test_fams[i]), i))
            for i in sorted(test_fams)
            if i < len(test)
        ]
        poisoned = test
        for block in extra:
            poisoned = poisoned.concat(block)
        meta = {"class_split": [int((train.y == 1).sum()), int((train.y == -1).sum())]}
        return ExperimentTask(train, families, poisoned, meta)
    raise ConfigError(f"dataset.source: unknown source {source!r} (mnist5k, idx, features)")


# experiment loop ----------------------------------------------------------


def resolve_checkpoints(n, budget=None, checkpoints=None) -> list:
    budget = n if budget is None else int(budget)
    if not 0 <= budget <= n:
        raise SizeError(f"budget {budget} exceeds the {n} available source points")
    if checkpoints is None:
        cps = {c for c in DEFAULT_CHECKPOINTS if c <= budget}
    else:
        cps = set(int(c) for c in checkpoints)
        bad = [c for c in cps if not 0 <= c <= budget]
        if bad:
            raise ConfigError(f"checkpoints: {sorted(bad)} outside [0, {budget}]")
    cps |= {0, budget}
    return sorted(cps)


def build_training_set(task: ExperimentTask, augmented, downweight=False, literal=False) -> Dataset:
    """Originals followed by the families of ``augmented`` in ascending origin order.

    Row order depends only on the augmented set, never on selection order,
    so equal sets give bit-identical fits.
    """
    chosen = sorted(int(i) for i in augmented)
    w = task.train.w.copy()
    blocks, ys, ws, origins = [task.train.X], [task.train.y], [w], [task.train.origin]
    for i in chosen:
        fam = task.families[i]
        m = fam.shape[0]
        share = family_weight(task.train.w[i], m, literal) if downweight else task.train.w[i]
        if downweight:
            w[i] = share
        blocks.append(fam)
        ys.append(np.full(m, task.train.y[i]))
        ws.append(np.full(m, share))
        origins.append(np.full(m, i))
    return Dataset(np.vstack(blocks), np.concatenate(ys), np.concatenate(ws), np.concatenate(origins))


class _FitCache:
    def __init__(self, task, settings: TrainSettings, seed):
        self.task = task
        self.settings = settings
        self.seed = seed
        self._fits = {}
        self._lock = threading.Lock()

    def config_for(self, data):
        s = self.settings
        if s.C_grid:
            C = cross_validate_C(data, s.C_grid, s.folds, self.seed * 1000 + _PURPOSE_CV, TrainConfig(s.C, s.tol, s.max_iter))
        else:
            C = s.C
        return TrainConfig(C, s.tol, s.max_iter)

    def fit(self, augmented, downweight, literal):
        key = (tuple(sorted(int(i) for i in augmented)), bool(downweight), bool(literal))
        with self._lock:
            hit = self._fits.get(key)
        if hit is not None:
            return hit
        data = build_training_set(self.task, augmented, downweight, literal)
        config = self.config_for(data)
        try:
            params = fit_logistic(data, config)
        except AugselectError as exc:
            raise type(exc)(f"refit with {len(key[0])} augmented points failed: {exc}") from exc
        result = (params, config, data)
        with self._lock:
            self._fits.setdefault(key, result)
        return result


def _scores_for(metric, params, config, data, task, svm_grid, svm_folds, seed, version):
    originals = task.train
    if metric == "uniform":
        return ScoreVector.uniform(task.n, version)
    if metric == "loss":
        return score_all(params, None, originals, "loss", version)
    if metric == "influence":
        factor = loss_hessian_factor(params, data, config)
        return score_all(params, factor, originals, "influence", version)
    svm = fit_svm(data, svm_grid, svm_folds, seed)
    s = margin_scores(svm, originals, "absolute" if metric == "margin_abs" else "inverse")
    return ScoreVector(s.values, s.metric, version)


@dataclass
class RepeatResult:
    policy: str
    repeat: int
    curve: AccuracyCurve
    order: list
    initial_scores: ScoreVector | None = None
    final_scores: ScoreVector | None = None


def run_repeat(task, policy: PolicyConfig, config: ExperimentConfig, repeat: int, cache: _FitCache) -> RepeatResult:
    seed = config.seed + policy.seed
    rng = make_rng(seed, repeat, _PURPOSE_SELECT)
    n = task.n
    dw, lit = policy.downweight, policy.literal_downweight

    params, tconf, data = cache.fit((), dw, lit)
    version = 0

    def scores_now(params, tconf, data, version):
        s = _scores_for(policy.metric, params, tconf, data, task, config.svm_grid, config.svm_folds, seed, version)
        return invert_scores(s) if policy.inverse else s

    scores = scores_now(params, tconf, data, version)
    initial_scores = scores

    if policy.kind == "vsv":
        svm = fit_svm(task.train, config.svm_grid, config.svm_folds, seed)
        cps = [0, len(vsv_select(svm))]
    else:
        cps = resolve_checkpoints(n, config.budget, config.checkpoints)

    budgets, accs, weights = [], [], []
    order: list = []
    augmented: set = set()
    kernel = None
    for b in cps:
        if policy.kind == "vsv":
            current = vsv_select(svm) if b else []
            order = list(current)
        elif policy.kind in ("stratified_cluster", "kdpp"):
            # subsets are drawn afresh for every budget, not grown
            if b == 0:
                current = []
            elif policy.kind == "stratified_cluster":
                assign, _ = kmeans(task.train.X, b, make_rng(seed, repeat, _PURPOSE_CLUSTER, b))
                quality = None if policy.metric == "uniform" else scores
                current = stratified_select(assign, quality, rng)
            else:
                if kernel is None or policy.update_scores:
                    kernel = build_dpp_kernel(task.train.X, scores)
                if b > kernel.rank():
                    raise SizeError(f"{policy.name}: budget {b} exceeds k-DPP kernel rank {kernel.rank()}")
                current = sample_kdpp(kernel, b, rng)
            order = list(current)
        else:
            need = b - len(order)
            avail = np.array([i for i in range(n) if i not in augmented], dtype=np.int64)
            if policy.kind == "baseline_uniform":
                local = sample_uniform(avail.size, need, rng)
            elif policy.kind == "random_proportional":
                local = sample_proportional(scores.values[avail], need, rng)
            else:
                local = select_topk(scores.values[avail], need)
            order.extend(int(avail[j]) for j in local)
            current = order
        augmented = set(current)
        if len(augmented) != len(current):
            raise AssertionError(f"{policy.name}: a point was selected twice")
        params, tconf, data = cache.fit(current, dw, lit)
        budgets.append(b)
        accs.append(accuracy(params, task.test))
        weights.append(data.total_weight)
        log.debug("%s repeat %d budget %d acc %.4f", policy.name, repeat, b, accs[-1])
        if policy.update_scores and b != cps[-1]:
            version += 1
            scores = scores_now(params, tconf, data, version)

    final_scores = None
    if repeat == 0:
        final_scores = _scores_for("influence", params, tconf, data, task, config.svm_grid, config.svm_folds, seed, version + 1)
    return RepeatResult(policy.name, repeat, AccuracyCurve(budgets, accs, weights), order, initial_scores, final_scores)


@dataclass
class PolicySummary:
    policy: PolicyConfig
    repeats: list
    auc_mean: float
    auc_std: float | None
    influence_pairs: list = field(default_factory=list)
    pairs_spearman: tuple | None = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    summaries: dict
    histograms: dict
    meta: dict

    def curve_rows(self):
        for name, summary in self.summaries.items():
            for r in summary.repeats:
                for b, a in zip(r.curve.budgets, r.curve.accuracies):
                    yield name, r.repeat, b, a


def initial_final_influence_pairs(initial: ScoreVector, final: ScoreVector) -> list:
    """``(initial |I|, final |I|)`` per original training point."""
    if len(initial) != len(final):
        raise MetricError("score vectors differ in length")
    return list(zip(initial.values.tolist(), final.values.tolist()))


def run_experiment(config: ExperimentConfig, task: ExperimentTask | None = None, threads=1) -> ExperimentReport:
    if task is None:
        task = prepare_task(config.dataset, config.transform)
    if config.budget is not None and config.budget > task.n:
        raise SizeError(f"budget {config.budget} exceeds the {task.n} available source points")
    cache = _FitCache(task, config.train, config.seed)

    params, tconf, data = cache.fit((), False, False)
    init_loss = score_all(params, None, task.train, "loss")
    init_infl = score_all(params, loss_hessian_factor(params, data, tconf), task.train, "influence")
    histograms = {
        m: score_histogram(s, config.histogram_bins) for m, s in (("loss", init_loss), ("influence", init_infl))
    }

    jobs = []
    for policy in config.policies:
        repeats = config.repeats if policy.stochastic else 1
        jobs.extend((policy, r) for r in range(repeats))

    def work(job):
        policy, r = job
        return run_repeat(task, policy, config, r, cache)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    summaries = {}
    for policy in config.policies:
        mine = [r for r in results if r.policy == policy.name]
        aucs = [auc(r.curve) for r in mine]
        std = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else None
        first = mine[0]
        pairs = initial_final_influence_pairs(init_infl, first.final_scores)
        try:
            rho = spearman([p[0] for p in pairs], [p[1] for p in pairs])
        except MetricError:
            rho = None
        summaries[policy.name] = PolicySummary(policy, mine, float(np.mean(aucs)), std, pairs, rho)
    meta = dict(task.meta)
    meta.update({"n_train": task.n, "n_test": len(task.test), "family_sizes": sorted({f.shape[0] for f in task.families})})
    return ExperimentReport(config, summaries, histograms, meta)


# output -----------------------------------------------------------------


def _stamp(fh, config_hash, seed):
    fh.write(f"# config_hash={config_hash} seed={seed}\n")


def write_report(report: ExperimentReport, outdir) -> Path:
    """Write curves.csv, auc.csv, histogram.csv, influence_pairs.csv and report.json."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    h, seed = report.config.hash(), report.config.seed

    with open(out / "curves.csv", "w", newline="") as fh:
        _stamp(fh, h, seed)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "repeat", "budget", "accuracy"])
        for name, r, b, a in report.curve_rows():
            w.writerow([name, r, b, repr(float(a))])

    with open(out / "auc.csv", "w", newline="") as fh:
        _stamp(fh, h, seed)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "mean", "std"])
        for name, s in report.summaries.items():
            w.writerow([name, repr(s.auc_mean), "" if s.auc_std is None else repr(s.auc_std)])

    with open(out / "histogram.csv", "w", newline="") as fh:
        _stamp(fh, h, seed)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "bin_lo", "bin_hi", "count"])
        for metric, (edges, counts) in report.histograms.items():
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([metric, repr(float(lo)), repr(float(hi)), int(c)])

    with open(out / "influence_pairs.csv", "w", newline="") as fh:
        _stamp(fh, h, seed)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "index", "initial", "final"])
        for name, s in report.summaries.items():
            for i, (a, b) in enumerate(s.influence_pairs):
                w.writerow([name, i, repr(a), repr(b)])

    summary = {
        "config_hash": h,
        "seed": seed,
        "config": report.config.to_dict(),
        "meta": report.meta,
        "policies": {
            name: {
                "auc_mean": s.auc_mean,
                "auc_std": s.auc_std,
                "repeats": len(s.repeats),
                "realized_seeds": [[seed + s.policy.seed, r.repeat] for r in s.repeats],
                "total_weights": [r.curve.total_weights for r in s.repeats],
                "influence_pairs_spearman": None if s.pairs_spearman is None else {
                    "rho": s.pairs_spearman[0], "p_approx": s.pairs_spearman[1],
                },
            }
            for name, s in report.summaries.items()
        },
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out
