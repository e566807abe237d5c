import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augselect.dataio import LabeledExample, RawImage
from augselect.exceptions import ParameterError
from augselect.transforms import (
    PRESETS,
    TransformSpec,
    build_poisoned_test,
    crop_zoom,
    expand,
    family_features,
    preset,
    rotate,
    translate,
)

images = st.integers(2, 9).flatmap(
    lambda h: st.integers(2, 9).flatmap(
        lambda w: st.lists(st.integers(0, 255), min_size=h * w, max_size=h * w).map(
            lambda v: RawImage(np.array(v, dtype=np.uint8).reshape(h, w))
        )
    )
)


def _px(img):
    return img.pixels[:, :, 0].astype(int)


class TestTranslate:
    def test_right_and_down(self):
        img = RawImage(np.arange(1, 10, dtype=np.uint8).reshape(3, 3))
        np.testing.assert_array_equal(_px(translate(img, 1, 0)), [[0, 1, 2], [0, 4, 5], [0, 7, 8]])
        np.testing.assert_array_equal(_px(translate(img, 0, 1)), [[0, 0, 0], [1, 2, 3], [4, 5, 6]])
        np.testing.assert_array_equal(_px(translate(img, -1, -1)), [[5, 6, 0], [8, 9, 0], [0, 0, 0]])

    @settings(max_examples=60, deadline=None)
    @given(images, st.integers(-8, 8), st.integers(-8, 8))
    def test_matches_index_remap(self, img, dx, dy):
        h, w = img.height, img.width
        if abs(dx) >= w or abs(dy) >= h:
            with pytest.raises(ParameterError):
                translate(img, dx, dy)
            return
        want = np.zeros((h, w), dtype=int)
        for r in range(h):
            for c in range(w):
                if 0 <= r - dy < h and 0 <= c - dx < w:
                    want[r, c] = img.pixels[r - dy, c - dx, 0]
        np.testing.assert_array_equal(_px(translate(img, dx, dy)), want)

    @settings(max_examples=30, deadline=None)
    @given(images)
    def test_inverse_restores_interior(self, img):
        back = translate(translate(img, 1, 1), -1, -1)
        np.testing.assert_array_equal(_px(back)[:-1, :-1], _px(img)[:-1, :-1])

    def test_zero_is_identity(self):
        img = RawImage(np.eye(4, dtype=np.uint8) * 9)
        assert translate(img, 0, 0) == img


class TestRotate:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8).flatmap(lambda n: st.lists(st.integers(0, 255), min_size=n * n, max_size=n * n)))
    def test_quarter_turn_is_rot90(self, vals):
        n = int(round(len(vals) ** 0.5))
        img = RawImage(np.array(vals, dtype=np.uint8).reshape(n, n))
        np.testing.assert_array_equal(_px(rotate(img, 90)), np.rot90(_px(img)))
        np.testing.assert_array_equal(_px(rotate(img, 180)), np.rot90(_px(img), 2))
        np.testing.assert_array_equal(_px(rotate(img, -90)), np.rot90(_px(img), -1))

    def test_zero_angle_identity(self):
        img = RawImage(np.arange(16, dtype=np.uint8).reshape(4, 4))
        assert rotate(img, 0.0) == img

    def test_center_fixed_and_corners_zero_filled(self):
        img = RawImage(np.full((5, 5), 200, dtype=np.uint8))
        out = _px(rotate(img, 45))
        assert out[2, 2] == 200
        # corner (0, 0) reads source (2, 2 - 2*sqrt(2)): 17% of a row of 200s
        assert out[0, 0] == round(200 * (1 - (2 * np.sqrt(2) - 2)))

    def test_half_pixel_bilinear(self):
        # 1-d ramp rotated by a tiny angle stays within neighbouring values
        img = RawImage(np.tile(np.array([0, 100, 200], dtype=np.uint8), (3, 1)))
        out = _px(rotate(img, 1.0))
        assert abs(out[1, 1] - 100) <= 2

    def test_non_finite(self):
        with pytest.raises(ParameterError):
            rotate(RawImage(np.zeros((3, 3), dtype=np.uint8)), float("nan"))


class TestCrop:
    def test_two_step_oracle(self):
        # 4x4 with border 1 keeps the 2x2 center; columns 0 and 200.
        # Output column j samples crop x = (j + 0.5) / 2 - 0.5, clamped to [0, 1]:
        # -0.25 -> 0, 0.25, 0.75, 1.25 -> 1, giving 0, 50, 150, 200.
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:, 2] = 200
        out = _px(crop_zoom(RawImage(px), 1))
        np.testing.assert_array_equal(out, np.tile([0, 50, 150, 200], (4, 1)))

    def test_constant_image_preserved(self):
        img = RawImage(np.full((28, 28), 77, dtype=np.uint8))
        for b in range(1, 7):
            assert np.all(_px(crop_zoom(img, b)) == 77)

    @pytest.mark.parametrize("border", [0, 2, 3])
    def test_invalid_border(self, border):
        with pytest.raises(ParameterError):
            crop_zoom(RawImage(np.zeros((4, 4), dtype=np.uint8)), border)


class TestSpec:
    def test_grid_sizes(self):
        assert len(preset("mnist_translate")) == 4
        assert len(preset("mnist_rotate")) == 14
        assert len(preset("mnist_crop")) == 6
        assert len(preset("cifar_rotate")) == 4 and len(preset("norb_crop")) == 1

    def test_mnist_rotate_grid(self):
        grid = preset("mnist_rotate").grid
        assert grid[0] == -30.0 and grid[-1] == 30.0 and 0.0 not in grid
        np.testing.assert_allclose(np.diff(grid)[:6], 60 / 14)

    def test_translate_directions(self):
        assert TransformSpec("translate", (2,)).grid == [(0, -2), (0, 2), (-2, 0), (2, 0)]

    @pytest.mark.parametrize(
        "kind, params",
        [("shear", (1,)), ("translate", (1, 2)), ("translate", (0,)), ("rotate", (0.0,)), ("crop", (0,)), ("crop", ())],
    )
    def test_invalid(self, kind, params):
        with pytest.raises(ParameterError):
            TransformSpec(kind, params)

    def test_dict_round_trip(self):
        for spec in PRESETS.values():
            assert TransformSpec.from_dict(spec.to_dict()) == spec
        assert TransformSpec.from_dict({"preset": "mnist_crop"}) == PRESETS["mnist_crop"]
        with pytest.raises(ParameterError):
            TransformSpec.from_dict({"kind": "rotate"})
        with pytest.raises(ParameterError):
            preset("mnist_shear")

    def test_crop_too_wide_for_image(self):
        with pytest.raises(ParameterError):
            preset("mnist_crop").apply(RawImage(np.zeros((8, 8), dtype=np.uint8)))


class TestFamilies:
    def test_expand_keeps_label_weight_origin(self):
        img = RawImage(np.arange(36, dtype=np.uint8).reshape(6, 6))
        ex = LabeledExample(img.features(), -1, 0.5, 3)
        fam = expand(preset("mnist_translate"), ex, img)
        assert len(fam) == 4 and fam.origin_id == 3
        assert all(m.label == -1 and m.weight == 0.5 and m.origin_id == 3 for m in fam.members)
        np.testing.assert_array_equal(fam.X[3], translate(img, 2, 0).features())

    def test_family_features_shape(self):
        imgs = [RawImage(np.full((6, 6), i, dtype=np.uint8)) for i in range(3)]
        feats = family_features(preset("cifar_rotate"), imgs)
        assert [f.shape for f in feats] == [(4, 36)] * 3

    def test_poisoned_test_layout(self):
        pairs = [(RawImage(np.full((6, 6), 10 * i, dtype=np.uint8)), 1 if i else -1) for i in range(3)]
        test = build_poisoned_test(pairs, preset("mnist_translate"))
        assert len(test) == 3 * (1 + 4)
        np.testing.assert_array_equal(test.origin[:3], [0, 1, 2])
        np.testing.assert_array_equal(test.origin[3:7], 0)
        assert np.all(test.y[test.origin == 0] == -1)
        assert np.all(test.w == 1.0)
