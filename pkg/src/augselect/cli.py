"""Command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio, harness, oracles
from .exceptions import InputError, NumericalError
from .influence import loss_hessian_factor, score_all
from .linmodel import DEFAULT_SVM_GRID, ModelParams, TrainConfig, fit_logistic, fit_svm, margin_scores
from .scores import load_scores_csv, save_scores_csv
from .selection import (
    build_dpp_kernel,
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
from .transforms import PRESETS, TransformSpec, preset

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _file_hash(*paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()[:16]


def _parse_transform(text) -> TransformSpec:
    """``mnist_rotate`` or ``kind:p1,p2,...`` (e.g. ``rotate:-5,5``)."""
    if text in PRESETS:
        return preset(text)
    kind, _, params = text.partition(":")
    if not params:
        raise InputError(f"transform {text!r}: use a preset ({', '.join(PRESETS)}) or kind:params")
    try:
        return TransformSpec(kind, tuple(float(p) for p in params.split(",")))
    except ValueError:
        raise InputError(f"transform {text!r}: parameters must be numeric") from None


def _write_idx_pm(prefix: Path, data: dataio.Dataset, images):
    # IDX labels are unsigned bytes: +1 -> 1, -1 -> 0
    pairs = [(img, 1 if lab == 1 else 0) for img, lab in zip(images, data.y)]
    dataio.write_idx(f"{prefix}-images-idx3-ubyte", f"{prefix}-labels-idx1-ubyte", pairs)


def cmd_ingest(args):
    if args.mnist5k:
        pairs = dataio.load_mnist5k()
        test_source = None
    else:
        if not (args.images and args.labels):
            raise InputError("ingest needs --images and --labels, or --mnist5k")
        pairs = dataio.load_idx(args.images, args.labels)
        test_source = dataio.load_idx(args.test_images, args.test_labels) if args.test_images else None
    a, b = args.classes
    train = dataio.make_binary_task(pairs, a, b, args.n_train, args.seed)
    if test_source is None:
        test_pairs = dataio.binary_test_pairs(pairs, a, b, exclude=train.meta["source_positions"])
    else:
        test_pairs = dataio.binary_test_pairs(test_source, a, b)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_feature_csv(train, out / "train.csv")
    _write_idx_pm(out / "train", train, train.images)
    if test_pairs:
        test = dataio.Dataset(np.vstack([img.features() for img, _ in test_pairs]), np.array([l for _, l in test_pairs]))
        dataio.save_feature_csv(test, out / "test.csv")
        _write_idx_pm(out / "test", test, [img for img, _ in test_pairs])
    meta = {k: v for k, v in train.meta.items() if k != "source_positions"}
    meta["n_test"] = len(test_pairs)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"train {len(train)} (split {meta['class_split']}), test {len(test_pairs)} -> {out}")
    return 0


def cmd_augment(args):
    pairs = dataio.load_idx(args.images, args.labels)
    spec = _parse_transform(args.transform)
    if args.indices:
        with open(args.indices, newline="") as fh:
            rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#")) if r]
        indices = sorted({int(r[1]) for r in rows[1:]})
    else:
        indices = list(range(len(pairs)))
    families = {}
    for i in indices:
        if not 0 <= i < len(pairs):
            raise InputError(f"index {i} out of range for {len(pairs)} images")
        families[i] = np.vstack([img.features() for img in spec.apply(pairs[i][0])])
    dataio.save_augmented_csv(families, args.out)
    print(f"{len(families)} families of {len(spec)} members ({spec.kind}) -> {args.out}")
    return 0


def cmd_score(args):
    data = dataio.load_feature_csv(args.data)
    config = TrainConfig(C=args.C)
    if args.metric in ("loss", "influence"):
        params = ModelParams.load(args.model_in) if args.model_in else fit_logistic(data, config)
        if params.weights.size != data.feature_dim:
            raise InputError(f"model has {params.weights.size} weights, data has {data.feature_dim} features")
        factor = loss_hessian_factor(params, data, config) if args.metric == "influence" else None
        scores = score_all(params, factor, data, args.metric)
        if args.model_out:
            params.save(args.model_out)
    else:
        grid = args.svm_grid or DEFAULT_SVM_GRID
        svm = fit_svm(data, grid, args.folds, args.seed)
        scores = margin_scores(svm, data, "absolute" if args.metric == "margin_abs" else "inverse")
    stamp = f"inputs_hash={_file_hash(args.data)} seed={args.seed} C={args.C}"
    save_scores_csv(scores, args.out, header_comment=stamp)
    print(f"{len(scores)} {scores.metric} scores -> {args.out}")
    return 0


def cmd_select(args):
    rng = make_rng(args.seed, 0, 1)
    if args.policy == "vsv":
        if not args.data:
            raise InputError("vsv needs --data")
        data = dataio.load_feature_csv(args.data)
        chosen = vsv_select(fit_svm(data, args.svm_grid or DEFAULT_SVM_GRID, args.folds, args.seed))
    else:
        scores = load_scores_csv(args.scores) if args.scores else None
        if scores is not None and args.inverse:
            scores = invert_scores(scores)
        if args.k is None:
            raise InputError(f"{args.policy} needs --k")
        if args.policy == "baseline_uniform":
            n = len(scores) if scores is not None else len(dataio.load_feature_csv(args.data))
            chosen = sample_uniform(n, args.k, rng)
        elif scores is None:
            raise InputError(f"{args.policy} needs --scores")
        elif args.policy == "random_proportional":
            chosen = sample_proportional(scores, args.k, rng)
        elif args.policy == "deterministic_topk":
            chosen = select_topk(scores, args.k)
        else:
            if not args.data:
                raise InputError(f"{args.policy} needs --data for features")
            X = dataio.load_feature_csv(args.data).X
            if args.policy == "stratified_cluster":
                assign, _ = kmeans(X, args.k, make_rng(args.seed, 0, 2))
                chosen = stratified_select(assign, None if args.uniform_quality else scores, rng)
            else:
                q = np.ones(len(scores)) if args.uniform_quality else scores
                chosen = sample_kdpp(build_dpp_kernel(X, q), args.k, rng)
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# policy={args.policy} seed={args.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "index"])
        for r, i in enumerate(chosen, start=1):
            w.writerow([r, i])
    print(f"{len(chosen)} indices -> {args.out}")
    return 0


def cmd_run(args):
    config = harness.load_config(args.config)
    report = harness.run_experiment(config, threads=args.threads)
    out = harness.write_report(report, args.out)
    for name, s in report.summaries.items():
        std = "-" if s.auc_std is None else f"{s.auc_std:.4f}"
        print(f"{name:45s} AUC {s.auc_mean:.4f} +/- {std}")
    print(f"config {config.hash()} seed {config.seed} -> {out}")
    return 0


def cmd_report(args):
    out = Path(args.dir)
    try:
        summary = json.loads((out / "report.json").read_text())
    except FileNotFoundError:
        raise InputError(f"{out}: no report.json (run 'augselect run' first)") from None
    curves = {}
    with open(out / "curves.csv", newline="") as fh:
        for row in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            curves.setdefault(row["policy"], {}).setdefault(int(row["budget"]), []).append(float(row["accuracy"]))
    print(f"config {summary['config_hash']} seed {summary['seed']}  meta {summary['meta']}")
    print(f"{'policy':45s} {'AUC mean':>12s} {'AUC std':>10s} {'acc@0':>7s} {'acc@end':>8s}")
    for name, p in summary["policies"].items():
        by_budget = curves.get(name, {})
        first = np.mean(by_budget[min(by_budget)]) if by_budget else float("nan")
        last = np.mean(by_budget[max(by_budget)]) if by_budget else float("nan")
        std = "-" if p["auc_std"] is None else f"{p['auc_std']:.4f}"
        print(f"{name:45s} {p['auc_mean']:12.4f} {std:>10s} {first:7.4f} {last:8.4f}")
    return 0


def cmd_oracle(args):
    names = oracles.SUITES if args.suite == "all" else (args.suite,)
    results = oracles.run_suites(names, quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} oracles passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="augselect", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="sample a binary task from IDX files into feature CSVs")
    s.add_argument("--images")
    s.add_argument("--labels")
    s.add_argument("--test-images")
    s.add_argument("--test-labels")
    s.add_argument("--mnist5k", action="store_true", help="use the MNIST subset bundled with mlxtend")
    s.add_argument("--classes", type=int, nargs=2, default=[3, 8], metavar=("POS", "NEG"))
    s.add_argument("--n-train", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("augment", help="write augmented-feature companion CSV for IDX images")
    s.add_argument("--images", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--transform", required=True, help="preset name or kind:p1,p2")
    s.add_argument("--indices", help="selection CSV (round,index); default all images")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("score", help="fit a model and write per-point scores")
    s.add_argument("--data", required=True)
    s.add_argument("--metric", required=True, choices=["loss", "influence", "margin_abs", "margin_inv"])
    s.add_argument("--C", type=float, default=10.0)
    s.add_argument("--svm-grid", type=float, nargs="+")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model-in")
    s.add_argument("--model-out")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("select", help="choose points to augment from scores")
    s.add_argument("--policy", required=True, choices=[
        "baseline_uniform", "random_proportional", "deterministic_topk", "vsv", "stratified_cluster", "kdpp",
    ])
    s.add_argument("--scores")
    s.add_argument("--data")
    s.add_argument("--k", type=int)
    s.add_argument("--inverse", action="store_true")
    s.add_argument("--uniform-quality", action="store_true", help="ignore scores in stratified_cluster/kdpp")
    s.add_argument("--svm-grid", type=float, nargs="+")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("run", help="run an experiment config")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="summarize an experiment output directory")
    s.add_argument("dir")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("oracle", help="run brute-force correctness oracles")
    s.add_argument("--suite", default="all", choices=("all",) + oracles.SUITES)
    s.add_argument("--quick", action="store_true", help="fewer trials, looser sampling tolerances")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"augselect: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, FileNotFoundError, IsADirectoryError, IndexError) as exc:
        print(f"augselect: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
