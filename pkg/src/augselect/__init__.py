"""Choosing which training points to augment, guided by influence and loss."""

from .dataio import Dataset, LabeledExample, RawImage, load_feature_csv, load_idx, save_feature_csv
from .exceptions import AugselectError, ConvergenceError, InputError, NumericalError
from .harness import ExperimentConfig, auc, load_config, run_experiment, spearman, write_report
from .influence import InfluenceScorer, loo_influence, loss_hessian_factor, score_all
from .linmodel import LinearSVM, ModelParams, TrainConfig, WeightedLogisticRegression, fit_logistic, fit_svm
from .scores import ScoreVector
from .selection import PolicyConfig, make_rng, sample_kdpp, sample_proportional, select_topk
from .transforms import PRESETS, AugmentationFamily, TransformSpec, preset

__version__ = "0.1.0"

__all__ = [
    "AugmentationFamily",
    "AugselectError",
    "ConvergenceError",
    "Dataset",
    "ExperimentConfig",
    "InfluenceScorer",
    "InputError",
    "LabeledExample",
    "LinearSVM",
    "ModelParams",
    "NumericalError",
    "PRESETS",
    "PolicyConfig",
    "RawImage",
    "ScoreVector",
    "TrainConfig",
    "TransformSpec",
    "WeightedLogisticRegression",
    "auc",
    "fit_logistic",
    "fit_svm",
    "load_config",
    "load_feature_csv",
    "load_idx",
    "loo_influence",
    "loss_hessian_factor",
    "make_rng",
    "preset",
    "run_experiment",
    "sample_kdpp",
    "sample_proportional",
    "save_feature_csv",
    "score_all",
    "select_topk",
    "spearman",
    "write_report",
]
