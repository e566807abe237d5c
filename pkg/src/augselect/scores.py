"""Per-point augmentation scores and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, FormatError, ParseError

METRICS = ("loss", "influence", "margin_abs", "margin_inv", "uniform")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Nonnegative scores, one per original training point.

    ``metric`` names what produced the values (an ``_inverse`` suffix marks
    scores passed through :func:`augselect.selection.invert_scores`).
    ``model_version`` counts the fits that preceded the scores.
    """

    values: np.ndarray
    metric: str = "uniform"
    model_version: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DataError("scores must be finite and nonnegative")
        base = self.metric[: -len("_inverse")] if self.metric.endswith("_inverse") else self.metric
        if base not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, idx):
        return self.values[idx]

    @classmethod
    def uniform(cls, n, model_version=0):
        return cls(np.ones(n), "uniform", model_version)


def save_scores_csv(scores: ScoreVector, path, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "score", "metric", "model_version"])
        for i, s in enumerate(scores.values):
            writer.writerow([i, repr(float(s)), scores.metric, scores.model_version])


def load_scores_csv(path) -> ScoreVector:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows or rows[0][:2] != ["index", "score"]:
        raise FormatError(f"{path}: expected an 'index,score,metric,model_version' header")
    rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: no scores")
    try:
        pairs = sorted((int(r[0]), float(r[1])) for r in rows)
    except (ValueError, IndexError):
        raise ParseError(f"{path}: malformed score row") from None
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise FormatError(f"{path}: indices must be 0..n-1")
    metric = rows[0][2] if len(rows[0]) > 2 else "uniform"
    version = int(rows[0][3]) if len(rows[0]) > 3 else 0
    try:
        return ScoreVector(np.array([s for _, s in pairs]), metric, version)
    except DataError as exc:
        raise ParseError(f"{path}: {exc}") from None
