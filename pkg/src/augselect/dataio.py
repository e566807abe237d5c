"""Raw image and feature-file loading, and weighted binary datasets."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .exceptions import (
    DataError,
    FormatError,
    LabelError,
    LengthError,
    PairingError,
    ParseError,
    SizeError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class RawImage:
    """An 8-bit raster stored as a ``(height, width, channels)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise FormatError(f"expected (h, w, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise FormatError("image dimensions must be positive")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise FormatError("pixel intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.array(px, order="C")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_flat(cls, flat, width, height, channels=1):
        flat = np.asarray(flat)
        if flat.size != width * height * channels:
            raise LengthError(
                f"{flat.size} pixels do not fill a {width}x{height}x{channels} image"
            )
        return cls(flat.reshape(height, width, channels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def flat(self) -> np.ndarray:
        """Row-major, channel-interleaved bytes."""
        return self.pixels.reshape(-1)

    def features(self) -> np.ndarray:
        """Pixels flattened and scaled to [0, 1]."""
        return self.flat.astype(np.float64) / 255.0

    def __eq__(self, other):
        if not isinstance(other, RawImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    __hash__ = None


class LabeledExample(NamedTuple):
    features: np.ndarray
    label: int
    weight: float = 1.0
    origin_id: int = 0


@dataclass
class Dataset:
    """Weighted examples with labels in {-1, +1}.

    Stored column-wise: ``X`` is ``(n, d)``, ``y``, ``w`` and ``origin`` are
    length ``n``. ``origin[i]`` is the index of the original example that row
    ``i`` was derived from. ``images`` optionally holds the source rasters of
    the rows, aligned with ``X``.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray = None
    origin: np.ndarray = None
    images: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        if X.ndim != 2:
            raise FormatError(f"feature matrix must be 2-d, got shape {X.shape}")
        n = X.shape[0]
        y = np.asarray(self.y).reshape(-1)
        if y.shape[0] != n:
            raise LengthError(f"{n} feature rows but {y.shape[0]} labels")
        if n and not np.all(np.isin(y, (-1, 1))):
            raise LabelError("labels must be -1 or +1")
        y = y.astype(np.int64)
        w = np.ones(n) if self.w is None else np.asarray(self.w, dtype=np.float64).reshape(-1)
        if w.shape[0] != n:
            raise LengthError(f"{n} rows but {w.shape[0]} weights")
        origin = (
            np.arange(n) if self.origin is None else np.asarray(self.origin, dtype=np.int64).reshape(-1)
        )
        if origin.shape[0] != n:
            raise LengthError(f"{n} rows but {origin.shape[0]} origin ids")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DataError("weights must be finite and nonnegative")
        if self.images is not None and len(self.images) != n:
            raise LengthError(f"{n} rows but {len(self.images)} images")
        self.X, self.y, self.w, self.origin = X, y, w, origin

    def __len__(self):
        return self.X.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    def __iter__(self) -> Iterator[LabeledExample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i) -> LabeledExample:
        return LabeledExample(self.X[i], int(self.y[i]), float(self.w[i]), int(self.origin[i]))

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], feature_dim=None):
        if not examples:
            return cls(np.zeros((0, feature_dim or 0)), np.zeros(0, dtype=np.int64))
        X = np.vstack([np.asarray(e.features, dtype=np.float64) for e in examples])
        return cls(
            X,
            np.array([e.label for e in examples]),
            np.array([e.weight for e in examples], dtype=np.float64),
            np.array([e.origin_id for e in examples]),
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        images = None if self.images is None else [self.images[i] for i in idx]
        return Dataset(self.X[idx], self.y[idx], self.w[idx], self.origin[idx], images, dict(self.meta))

    def with_weights(self, w) -> "Dataset":
        return Dataset(self.X, self.y, w, self.origin, self.images, dict(self.meta))

    def concat(self, other: "Dataset") -> "Dataset":
        if len(self) and len(other) and self.feature_dim != other.feature_dim:
            raise FormatError("feature dimensions differ")
        images = None
        if self.images is not None and other.images is not None:
            images = list(self.images) + list(other.images)
        return Dataset(
            np.vstack([self.X, other.X]) if len(other) else self.X,
            np.concatenate([self.y, other.y]),
            np.concatenate([self.w, other.w]),
            np.concatenate([self.origin, other.origin]),
            images,
            dict(self.meta),
        )

    def check_fittable(self):
        if len(self) == 0:
            raise DataError("dataset is empty")
        if not self.total_weight > 0:
            raise DataError("total example weight must be positive")
        labels = set(np.unique(self.y[self.w > 0]).tolist())
        if labels != {-1, 1}:
            raise DataError(f"both labels need positive weight, found {sorted(labels)}")


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic):
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise LengthError(f"{path}: file shorter than its magic number")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise LengthError(f"{path}: truncated header")
    dims = struct.unpack(">" + "I" * ndim, data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise LengthError(f"{path}: payload has {len(data) - header} bytes, need {size}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> list[tuple[RawImage, int]]:
    """Read an IDX image file and its label file into ``(image, label)`` pairs."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise PairingError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if images.shape[1] == 0 or images.shape[2] == 0:
        raise FormatError("image dimensions must be positive")
    return [(RawImage(img.copy()), int(lab)) for img, lab in zip(images, labels)]


def write_idx(images_path, labels_path, pairs):
    """Write ``(image, label)`` pairs as an uncompressed IDX file pair."""
    if not pairs:
        raise SizeError("nothing to write")
    h, w = pairs[0][0].height, pairs[0][0].width
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(pairs), h, w))
        for img, _ in pairs:
            if img.channels != 1 or img.height != h or img.width != w:
                raise FormatError("IDX images must be single-channel and equally sized")
            fh.write(img.pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(pairs)))
        fh.write(bytes(int(lab) for _, lab in pairs))


def _map_label(cell, lineno):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"line {lineno}: label {cell!r} is not numeric") from None
    if value in (1.0,):
        return 1
    if value in (0.0, -1.0):
        return -1
    raise LabelError(f"line {lineno}: label {cell!r} not in {{0, 1, -1, +1}}")


def load_feature_csv(path) -> Dataset:
    """Load ``label,f1,...,fd`` rows; a non-numeric first row is a header.

    Labels 0/1 and -1/+1 are both accepted and mapped to -1/+1. Every row
    gets weight 1 and its row index as origin id.
    """
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0][1]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise FormatError(f"{path}: need a label column and at least one feature")
    labels, feats = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise FormatError(f"{path}: line {lineno} has {len(row)} columns, expected {width}")
        labels.append(_map_label(row[0], lineno))
        try:
            feats.append([float(c) for c in row[1:]])
        except ValueError:
            raise ParseError(f"{path}: line {lineno} has a non-numeric cell") from None
    X = np.array(feats, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: non-finite feature value")
    return Dataset(X, np.array(labels))


def save_feature_csv(data: Dataset, path, header=False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(["label"] + [f"f{j}" for j in range(data.feature_dim)])
        for x, label in zip(data.X, data.y):
            writer.writerow([int(label)] + [repr(float(v)) for v in x])


def load_augmented_csv(path) -> dict[int, np.ndarray]:
    """Read ``origin_id,member_index,f1..fd`` rows into ``{origin: (m, d) array}``.

    Members are ordered by ``member_index``.
    """
    groups: dict[int, list] = {}
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r]
    if rows:
        try:
            int(rows[0][1][0])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width or width < 3:
            raise FormatError(f"{path}: line {lineno} has {len(row)} columns, expected {width}")
        try:
            origin, member = int(row[0]), int(row[1])
            feats = [float(c) for c in row[2:]]
        except ValueError:
            raise ParseError(f"{path}: line {lineno} has a non-numeric cell") from None
        groups.setdefault(origin, []).append((member, feats))
    out = {}
    for origin, members in groups.items():
        members.sort(key=lambda t: t[0])
        out[origin] = np.array([f for _, f in members], dtype=np.float64)
    return out


def save_augmented_csv(families: dict[int, np.ndarray], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for origin in sorted(families):
            for j, x in enumerate(families[origin]):
                writer.writerow([origin, j] + [repr(float(v)) for v in x])


def make_binary_task(pairs, class_a, class_b, n_train, seed) -> Dataset:
    """Sample ``n_train`` images of two classes, uniformly without replacement.

    ``class_a`` maps to +1 and ``class_b`` to -1. The realized class split and
    the positions in ``pairs`` that were drawn are kept in ``meta``.
    """
    if n_train <= 0:
        raise SizeError("n_train must be positive")
    pool = [i for i, (_, lab) in enumerate(pairs) if lab in (class_a, class_b)]
    if len(pool) < n_train:
        raise SizeError(f"only {len(pool)} examples of classes {class_a}/{class_b}, need {n_train}")
    rng = np.random.Generator(np.random.Philox(seed))
    chosen = np.sort(rng.choice(len(pool), size=n_train, replace=False))
    picked = [pool[j] for j in chosen]
    images = [pairs[i][0] for i in picked]
    y = np.array([1 if pairs[i][1] == class_a else -1 for i in picked])
    X = np.vstack([img.features() for img in images])
    meta = {
        "classes": [class_a, class_b],
        "class_split": [int((y == 1).sum()), int((y == -1).sum())],
        "source_positions": picked,
        "seed": seed,
    }
    return Dataset(X, y, images=images, meta=meta)


def binary_test_pairs(pairs, class_a, class_b, exclude=()):
    """Pairs of the two classes relabeled to +1/-1, skipping positions in ``exclude``."""
    skip = set(exclude)
    return [
        (img, 1 if lab == class_a else -1)
        for i, (img, lab) in enumerate(pairs)
        if lab in (class_a, class_b) and i not in skip
    ]


def load_mnist5k() -> list[tuple[RawImage, int]]:
    """The 5000-image MNIST subset bundled with ``mlxtend`` (500 per digit)."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise DataError("the bundled MNIST subset needs the optional 'mlxtend' package") from exc
    X, y = mnist_data()
    X = X.astype(np.uint8)
    return [(RawImage(x.reshape(28, 28)), int(lab)) for x, lab in zip(X, y)]
