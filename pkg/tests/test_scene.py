import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsregen.exceptions import InvalidArgumentError
from lsregen.resample import box_downsample
from lsregen.scene import (
    VOCABULARY,
    BoundingBox,
    LayoutSpec,
    SceneMixture,
    box_iou,
    default_palette,
    layout_matches,
    mixture_from_layouts,
    render_template,
    sample_scene,
    symmetry_family,
    upscale_mixture,
)


def one_box(x, y, w, h, label="person", canvas=(16, 16)):
    return LayoutSpec((BoundingBox(x, y, w, h, label),), canvas)


class TestBoundingBox:
    @pytest.mark.parametrize("args", [
        (0.5, 0.0, 0.6, 0.1),   # x + w > 1
        (0.0, 0.5, 0.1, 0.6),   # y + h > 1
        (1.0, 0.0, 0.1, 0.1),   # x not in [0, 1)
        (-0.1, 0.0, 0.1, 0.1),
        (0.0, 0.0, 0.0, 0.1),   # zero width
        (0.0, 0.0, 0.1, 1.5),
        (float("nan"), 0.0, 0.1, 0.1),
    ])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            BoundingBox(*args, "person")

    def test_edge_tolerance(self):
        b = BoundingBox(0.7, 0.0, 0.3 + 1e-12, 1.0, "car")
        assert b.x + b.w > 1.0

    def test_empty_label(self):
        with pytest.raises(InvalidArgumentError):
            BoundingBox(0, 0, 0.5, 0.5, "")


class TestLayoutSpec:
    def test_too_many_boxes(self):
        boxes = [BoundingBox(0.1 * i, 0.0, 0.05, 0.05, "car") for i in range(9)]
        with pytest.raises(InvalidArgumentError):
            LayoutSpec(tuple(boxes), (8, 8))

    def test_empty_allowed_but_not_valid(self):
        lay = LayoutSpec((), (8, 8))
        with pytest.raises(InvalidArgumentError):
            lay.validate()

    @pytest.mark.parametrize("canvas", [(0, 4), (4,), (2.5, 4)])
    def test_bad_canvas(self, canvas):
        with pytest.raises(InvalidArgumentError):
            LayoutSpec((), canvas)


class TestPalette:
    def test_unit_distinct_and_separated(self):
        pal = default_palette()
        assert set(pal) == set(VOCABULARY)
        cols = np.stack(list(pal.values()))
        np.testing.assert_allclose(np.linalg.norm(cols, axis=1), 1.0)
        gram = cols @ cols.T
        assert np.all(gram[~np.eye(8, dtype=bool)] <= 1 / 3 + 1e-12)


class TestRender:
    def test_empty_layout_is_background(self):
        img = render_template(LayoutSpec((), (6, 7)), background=0.25)
        assert img.shape == (3, 6, 7)
        assert np.all(img == 0.25)

    def test_full_canvas_box_center_and_corners(self):
        pal = default_palette()
        img = render_template(one_box(0.0, 0.0, 1.0, 1.0, "dog", (16, 16)), background=-0.2)
        np.testing.assert_allclose(img[:, 8, 8], pal["dog"], atol=1e-12)
        for y, x in [(0, 0), (0, 15), (15, 0), (15, 15)]:
            np.testing.assert_allclose(img[:, y, x], -0.2, atol=1e-12)

    def test_two_disjoint_boxes_mass_inside(self):
        # Labels with anti-aligned colours, so one box adds no positive mass to the other's channel.
        lay = LayoutSpec((BoundingBox(0.05, 0.1, 0.4, 0.5, "person"), BoundingBox(0.55, 0.3, 0.4, 0.6, "cat")), (32, 32))
        img = render_template(lay)
        pal = default_palette()
        for box in lay.boxes:
            chan = np.tensordot(pal[box.label], img, axes=1)
            inside = np.zeros((32, 32), dtype=bool)
            inside[round(box.y * 32):round((box.y + box.h) * 32), round(box.x * 32):round((box.x + box.w) * 32)] = True
            own = np.clip(chan, 0, None)
            assert own[inside].sum() >= 0.95 * own.sum()

    def test_later_box_on_top(self):
        lay = LayoutSpec((BoundingBox(0.0, 0.0, 1.0, 1.0, "person"), BoundingBox(0.25, 0.25, 0.5, 0.5, "car")), (16, 16))
        np.testing.assert_allclose(render_template(lay)[:, 8, 8], default_palette()["car"], atol=1e-12)

    def test_unknown_label(self):
        with pytest.raises(InvalidArgumentError):
            render_template(one_box(0.1, 0.1, 0.5, 0.5, "unicorn"))

    def test_deterministic(self):
        lay = one_box(0.2, 0.1, 0.5, 0.6)
        assert render_template(lay).tobytes() == render_template(lay).tobytes()

    @given(st.integers(2, 8), st.integers(2, 8), st.integers(-2, 2), st.integers(-2, 2))
    def test_translation_covariant(self, x0, y0, dx, dy):
        n = 24
        box = BoundingBox(x0 / n, y0 / n, 8 / n, 6 / n, "cat")
        base = render_template(LayoutSpec((box,), (n, n)))
        moved = render_template(LayoutSpec((box.shifted(dx / n, dy / n),), (n, n)))
        np.testing.assert_allclose(np.roll(base, (dy, dx), axis=(1, 2)), moved, atol=1e-12)

    @pytest.mark.parametrize("S", [8, 16])
    def test_scale_consistent(self, S, quadrants):
        for lay in quadrants + [one_box(0.13, 0.27, 0.51, 0.33, "tree")]:
            small = render_template(lay, canvas=(S, S))
            big = render_template(lay, canvas=(3 * S, 3 * S))
            rms = math.sqrt(np.mean((box_downsample(big, 3) - small) ** 2))
            assert rms <= 0.05

    def test_grain_is_zero_mean_parity(self):
        lay = one_box(0.2, 0.2, 0.5, 0.5)
        diff = render_template(lay, grain=0.1) - render_template(lay)
        assert diff[0, 0, 0] == pytest.approx(0.1) and diff[0, 0, 1] == pytest.approx(-0.1)
        assert diff.mean() == pytest.approx(0.0)


def test_box_iou_cases():
    a = BoundingBox(0, 0, 0.5, 0.5, "car")
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BoundingBox(0.5, 0.5, 0.5, 0.5, "car")) == 0.0
    assert box_iou(a, BoundingBox(0.25, 0, 0.5, 0.5, "car")) == pytest.approx(1 / 3)


class TestMatching:
    def test_same_layout_matches(self, quadrants):
        assert layout_matches(quadrants[0], quadrants[0])
        assert not layout_matches(quadrants[0], quadrants[1])

    def test_label_multiset_must_agree(self):
        assert not layout_matches(one_box(0.1, 0.1, 0.5, 0.5, "car"), one_box(0.1, 0.1, 0.5, 0.5, "dog"))

    def test_iou_threshold(self):
        base = one_box(0.1, 0.1, 0.5, 0.5)
        assert layout_matches(one_box(0.11, 0.1, 0.5, 0.5), base)
        assert not layout_matches(one_box(0.2, 0.1, 0.5, 0.5), base)


class TestMixture:
    def test_single_layout(self, quadrants):
        m = mixture_from_layouts(quadrants[:1], 0.1)
        assert m.n_components == 1 and m.weights[0] == 1.0

    def test_uniform_weights(self, quadrants):
        np.testing.assert_allclose(mixture_from_layouts(quadrants, 0.1).weights, 0.25)

    def test_templates_view(self, quadrants):
        m = mixture_from_layouts(quadrants, 0.1)
        lay, mu, w = m.templates[2]
        assert lay == quadrants[2] and w == 0.25 and mu.shape == (3, 16, 16)

    def test_inconsistent_canvas(self, quadrants):
        with pytest.raises(InvalidArgumentError):
            mixture_from_layouts([quadrants[0], quadrants[1].with_canvas((8, 8))], 0.1)

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            mixture_from_layouts([], 0.1)

    def test_bad_weights(self, quadrants):
        means = np.zeros((2, 3, 4, 4))
        with pytest.raises(InvalidArgumentError):
            SceneMixture(tuple(quadrants[:2]), means, np.array([0.7, 0.7]), 0.1)

    def test_weights_recovered_by_classification(self, quadrants):
        m = mixture_from_layouts(quadrants[:3], 0.05)
        rng = np.random.default_rng(5)
        n = 10_000
        counts = np.zeros(3)
        for _ in range(n):
            img, _ = sample_scene(m, rng)
            counts[m.nearest_component(img)] += 1
        se = math.sqrt((1 / 3) * (2 / 3) / n)
        np.testing.assert_array_less(np.abs(counts / n - 1 / 3), 3 * se)

    def test_sigma_zero_returns_template(self, quadrants):
        m = mixture_from_layouts(quadrants, 0.0)
        img, k = sample_scene(m, 3)
        assert np.array_equal(img, m.means[k])

    def test_degenerate_weights(self, quadrants):
        m = mixture_from_layouts(quadrants[:3], 0.1)
        m = SceneMixture(m.layouts, m.means, np.array([1.0, 0.0, 0.0]), 0.1)
        rng = np.random.default_rng(0)
        assert all(sample_scene(m, rng)[1] == 0 for _ in range(200))

    def test_pixel_variance(self, quadrants):
        m = mixture_from_layouts(quadrants[:1], 0.1)
        rng = np.random.default_rng(9)
        draws = np.stack([sample_scene(m, rng)[0] for _ in range(10_000)])
        var = draws.var(axis=0, ddof=1)
        # Per-pixel sample variance has standard error 0.01 * sqrt(2 / (n - 1)).
        assert abs(var.mean() - 0.01) < 4 * 0.01 * math.sqrt(2 / 9_999) / math.sqrt(var.size) * 5
        assert np.all(np.abs(var - 0.01) < 5 * 0.01 * math.sqrt(2 / 9_999))

    def test_upscale_recovers_small_by_averaging(self, quadrants):
        m = mixture_from_layouts(quadrants, 0.01)
        big = upscale_mixture(m, 3, 0.1)
        assert big.canvas == (48, 48) and big.pixel_sigma == 0.1
        for mu_s, mu_b in zip(m.means, big.means):
            np.testing.assert_allclose(box_downsample(mu_b, 3), mu_s, atol=1e-12)
        assert big.layouts[0].canvas == (48, 48)


class TestSymmetryFamily:
    def test_quadrant_family_is_the_benchmark(self, quadrants):
        fam = symmetry_family(quadrants[0])
        assert len(fam) == 4
        for lay in quadrants:
            assert sum(layout_matches(lay, f, 0.99) for f in fam) == 1

    def test_symmetric_layout_deduplicated(self):
        fam = symmetry_family(one_box(0.25, 0.25, 0.5, 0.5))
        assert len(fam) == 1

    def test_first_is_input(self, quadrants):
        assert symmetry_family(quadrants[2])[0] == quadrants[2]
