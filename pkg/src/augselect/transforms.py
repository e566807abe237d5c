"""Deterministic, exhaustive image augmentations.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row, ``y``
growing downwards. Rotation is counterclockwise-positive as displayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, LabeledExample, RawImage
from .exceptions import ParameterError, SizeError

KINDS = ("translate", "rotate", "crop")


def translate(image: RawImage, dx: int, dy: int) -> RawImage:
    """Shift content by ``(dx, dy)`` pixels, zero-filling what is vacated."""
    dx, dy = int(dx), int(dy)
    h, w = image.height, image.width
    if abs(dx) >= w or abs(dy) >= h:
        raise ParameterError(f"offset ({dx}, {dy}) does not fit a {w}x{h} image")
    src = image.pixels
    out = np.zeros_like(src)
    out[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = src[
        max(-dy, 0):h + min(-dy, 0), max(-dx, 0):w + min(-dx, 0)
    ]
    return RawImage(out)


def _bilinear(pixels, xs, ys, clamp):
    """Sample ``pixels`` (h, w, c) at float coordinates.

    With ``clamp`` the coordinates are clipped to the image; otherwise
    neighbours outside it read as zero.
    """
    h, w = pixels.shape[:2]
    src = pixels.astype(np.float64)
    if clamp:
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    out = np.zeros(xs.shape + (pixels.shape[2],))
    for oy, wy in ((0, 1 - fy), (1, fy)):
        for ox, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + oy, x0 + ox
            inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.where(inside[..., None], src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], 0.0)
            out += wy * wx * vals
    return out


def _to_uint8(arr):
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def rotate(image: RawImage, degrees: float) -> RawImage:
    """Rotate about the image center with bilinear interpolation and zero fill."""
    degrees = float(degrees)
    if not np.isfinite(degrees):
        raise ParameterError("rotation angle must be finite")
    if degrees == 0.0:
        return image
    h, w = image.height, image.width
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = xx - cx, yy - cy
    # inverse map: output pixel -> source pixel
    xs = cx + u * cos - v * sin
    ys = cy + u * sin + v * cos
    # snap rounding noise so exact multiples of 90 degrees stay lossless
    xs = np.where(np.abs(xs - np.rint(xs)) < 1e-9, np.rint(xs), xs)
    ys = np.where(np.abs(ys - np.rint(ys)) < 1e-9, np.rint(ys), ys)
    return RawImage(_to_uint8(_bilinear(image.pixels, xs, ys, clamp=False)))


def crop_zoom(image: RawImage, border: int) -> RawImage:
    """Drop ``border`` pixels on every side and rescale back to full size.

    Resampling uses pixel-center alignment: output pixel ``j`` reads the crop
    at ``(j + 0.5) * crop_size / size - 0.5``, clamped to the crop.
    """
    border = int(border)
    h, w = image.height, image.width
    if border < 1 or 2 * border >= min(h, w):
        raise ParameterError(f"border {border} invalid for a {w}x{h} image")
    crop = image.pixels[border:h - border, border:w - border]
    ch, cw = crop.shape[:2]
    ys = (np.arange(h) + 0.5) * (ch / h) - 0.5
    xs = (np.arange(w) + 0.5) * (cw / w) - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return RawImage(_to_uint8(_bilinear(crop, gx, gy, clamp=True)))


@dataclass(frozen=True)
class TransformSpec:
    """An augmentation map given by a kind and a parameter grid.

    ``translate`` takes a single pixel offset applied in the four cardinal
    directions (up, down, left, right). ``rotate`` takes angles in degrees and
    ``crop`` border widths; both are expanded in ascending order.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown transform kind {self.kind!r}")
        params = tuple(float(p) if self.kind == "rotate" else int(p) for p in np.atleast_1d(self.params))
        if not params:
            raise ParameterError("parameter grid is empty")
        if self.kind == "translate":
            if len(params) != 1 or params[0] <= 0:
                raise ParameterError("translate takes one positive offset")
        elif self.kind == "rotate":
            if any(p == 0 or not np.isfinite(p) for p in params):
                raise ParameterError("rotate angles must be finite and nonzero")
            params = tuple(sorted(set(params)))
        else:
            if any(p < 1 for p in params):
                raise ParameterError("crop borders must be at least 1")
            params = tuple(sorted(set(params)))
        object.__setattr__(self, "params", params)

    @property
    def grid(self) -> list:
        if self.kind == "translate":
            o = self.params[0]
            return [(0, -o), (0, o), (-o, 0), (o, 0)]
        return list(self.params)

    def __len__(self):
        return len(self.grid)

    def apply(self, image: RawImage) -> list[RawImage]:
        if self.kind == "translate":
            return [translate(image, dx, dy) for dx, dy in self.grid]
        if self.kind == "rotate":
            return [rotate(image, a) for a in self.grid]
        if any(2 * b >= min(image.height, image.width) for b in self.grid):
            raise ParameterError(f"crop grid {self.params} too wide for {image.width}x{image.height}")
        return [crop_zoom(image, b) for b in self.grid]

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        if "preset" in d:
            return preset(d["preset"])
        try:
            return cls(d["kind"], tuple(d["params"]))
        except KeyError as exc:
            raise ParameterError(f"transform needs 'kind' and 'params', missing {exc}") from None


def _rotate_grid(limit, count):
    angles = np.linspace(-limit, limit, count)
    return tuple(float(a) for a in angles if abs(a) > 1e-12)


PRESETS = {
    "mnist_translate": TransformSpec("translate", (2,)),
    "mnist_rotate": TransformSpec("rotate", _rotate_grid(30.0, 15)),
    "mnist_crop": TransformSpec("crop", (1, 2, 3, 4, 5, 6)),
    "cifar_translate": TransformSpec("translate", (3,)),
    "cifar_rotate": TransformSpec("rotate", (-5.0, -2.5, 2.5, 5.0)),
    "cifar_crop": TransformSpec("crop", (2,)),
    "norb_translate": TransformSpec("translate", (6,)),
    "norb_rotate": TransformSpec("rotate", (-5.0, -2.5, 2.5, 5.0)),
    "norb_crop": TransformSpec("crop", (2,)),
}


def preset(name: str) -> TransformSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown transform preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass
class AugmentationFamily:
    origin_id: int
    members: list[LabeledExample]
    images: list[RawImage] | None = None

    def __len__(self):
        return len(self.members)

    @property
    def X(self) -> np.ndarray:
        return np.vstack([m.features for m in self.members])


def expand(spec: TransformSpec, example: LabeledExample, image: RawImage) -> AugmentationFamily:
    """All augmented copies of one example, in grid order, with its label."""
    images = spec.apply(image)
    members = [
        LabeledExample(img.features(), example.label, example.weight, example.origin_id)
        for img in images
    ]
    return AugmentationFamily(example.origin_id, members, images)


def family_features(spec: TransformSpec, images) -> list[np.ndarray]:
    """``(m, d)`` feature arrays of every image's augmentation family."""
    return [np.vstack([a.features() for a in spec.apply(img)]) for img in images]


def build_poisoned_test(test, spec: TransformSpec) -> Dataset:
    """Original test examples followed by every augmented copy, unit weights.

    ``test`` holds ``(image, label)`` pairs with labels already in {-1, +1}.
    Copies are grouped by source example in test order.
    """
    if not test:
        raise SizeError("test set is empty")
    X = [img.features() for img, _ in test]
    y = [lab for _, lab in test]
    origin = list(range(len(test)))
    for i, (img, lab) in enumerate(test):
        for aug in spec.apply(img):
            X.append(aug.features())
            y.append(lab)
            origin.append(i)
    return Dataset(np.vstack(X), np.array(y), origin=np.array(origin))
