import numpy as np
import pytest

from pathattr.errors import InvalidArgumentError
from pathattr.image import Image
from pathattr.metrics import msssim
from pathattr.models import LinearSoftmaxModel, TinyConvNet
from pathattr.paths import (
    PathSample,
    black_like,
    blur_path,
    guided_path,
    straight_line_path,
)
from pathattr.toydata import make_toy_dataset


def vec_image(*values):
    return Image(np.array(values, dtype=float).reshape(1, len(values), 1))


class TestPathSample:
    def test_rejects_non_monotone_alphas(self):
        img = vec_image(0.0, 0.0)
        with pytest.raises(InvalidArgumentError):
            PathSample(points=[img, img, img], alphas=[0.0, 1.0, 0.5], method="x")

    def test_rejects_mixed_shapes(self):
        with pytest.raises(InvalidArgumentError):
            PathSample(points=[vec_image(0.0), vec_image(0.0, 0.0)], alphas=[0.0, 1.0],
                       method="x")


class TestStraightLinePath:
    def test_two_step_interpolation(self):
        path = straight_line_path(vec_image(0.0, 0.0), vec_image(1.0, 0.5), steps=2)
        expected = [(0.0, 0.0), (0.5, 0.25), (1.0, 0.5)]
        for point, exp in zip(path.points, expected):
            assert point.data.reshape(-1) == pytest.approx(exp, abs=0)
        assert path.alphas == [0.0, 0.5, 1.0]

    def test_identical_endpoints_give_constant_path(self):
        x = vec_image(0.3, 0.7)
        path = straight_line_path(x, x, steps=5)
        for point in path.points:
            assert np.array_equal(point.data, x.data)

    def test_single_step_is_just_endpoints(self):
        a, b = vec_image(0.0), vec_image(1.0)
        path = straight_line_path(a, b, steps=1)
        assert len(path.points) == 2
        assert np.array_equal(path.points[0].data, a.data)
        assert np.array_equal(path.points[1].data, b.data)

    def test_endpoint_is_bit_exact(self):
        rng = np.random.default_rng(0)
        x_ref = Image(rng.random((4, 4, 1)))
        x = Image(rng.random((4, 4, 1)))
        path = straight_line_path(x_ref, x, steps=7)  # 1/7 is not dyadic
        assert np.array_equal(path.points[-1].data, x.data)

    def test_steps_are_constant_within_tolerance(self):
        rng = np.random.default_rng(1)
        path = straight_line_path(Image(rng.random((3, 3, 1))), Image(rng.random((3, 3, 1))),
                                  steps=9)
        stacked = path.stacked()
        diffs = stacked[1:] - stacked[:-1]
        assert np.abs(diffs - diffs[0]).max() < 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidArgumentError):
            straight_line_path(vec_image(0.0), vec_image(0.0, 0.0), steps=2)
        with pytest.raises(InvalidArgumentError):
            straight_line_path(vec_image(0.0), vec_image(1.0), steps=0)


class TestBlurPath:
    def test_last_point_is_input_bit_exact(self):
        img = make_toy_dataset(1, seed=2).images[0]
        path = blur_path(img, max_scale=128.0, steps=6)
        assert np.array_equal(path.points[-1].data, img.data)
        assert path.alphas[-1] == 0.0

    def test_constant_image_is_fixed_point(self):
        img = Image(np.full((8, 8, 1), 0.4))
        path = blur_path(img, max_scale=32.0, steps=4)
        for point in path.points:
            assert np.allclose(point.data, 0.4, atol=1e-12)

    def test_alphas_descend_quadratically(self):
        path = blur_path(Image(np.zeros((8, 8, 1))), max_scale=100.0, steps=4)
        assert path.alphas == pytest.approx([100.0, 56.25, 25.0, 6.25, 0.0])

    def test_similarity_to_input_is_nondecreasing(self):
        img = make_toy_dataset(1, seed=5).images[0]
        path = blur_path(img, steps=8)
        values = [msssim(point, img) for point in path.points]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))

    def test_default_scale_starts_near_informationless(self):
        img = make_toy_dataset(1, seed=5).images[0]
        path = blur_path(img, steps=8)
        assert msssim(path.points[0], img) < 0.1

    def test_rejects_bad_arguments(self):
        img = Image(np.zeros((4, 4, 1)))
        with pytest.raises(InvalidArgumentError):
            blur_path(img, max_scale=0.0, steps=4)
        with pytest.raises(InvalidArgumentError):
            blur_path(img, max_scale=1.0, steps=0)


class TestGuidedPath:
    def test_identical_endpoints_give_constant_path(self):
        net = TinyConvNet.initialized((4, 4, 1), seed=0)
        x = Image(np.random.default_rng(3).random((4, 4, 1)))
        path = guided_path(net, 0, x, x, steps=4)
        for point in path.points:
            assert np.array_equal(point.data, x.data)

    def test_fraction_one_matches_straight_line(self):
        net = TinyConvNet.initialized((5, 5, 1), seed=1)
        rng = np.random.default_rng(4)
        x_ref = Image(rng.random((5, 5, 1)))
        x = Image(rng.random((5, 5, 1)))
        guided = guided_path(net, 1, x_ref, x, steps=6, fraction=1.0)
        straight = straight_line_path(x_ref, x, steps=6)
        for g, s in zip(guided.points, straight.points):
            assert np.abs(g.data - s.data).max() < 1e-12

    def test_low_gradient_pixel_moves_first(self):
        # |g| is (0.1, 1.0) everywhere, so pixel 1 must finish before pixel 2 starts.
        model = LinearSoftmaxModel(np.array([[0.1, 1.0]]), np.zeros(1), (1, 2, 1),
                                   apply_softmax=False)
        path = guided_path(model, 0, vec_image(0.0, 0.0), vec_image(1.0, 1.0),
                           steps=4, fraction=0.5)
        expected = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)]
        for point, exp in zip(path.points, expected):
            assert point.data.reshape(-1) == pytest.approx(exp, abs=1e-15)

    def test_coordinates_move_monotonically(self):
        net = TinyConvNet.initialized((4, 4, 1), seed=2)
        rng = np.random.default_rng(6)
        x_ref = Image(rng.random((4, 4, 1)))
        x = Image(rng.random((4, 4, 1)))
        path = guided_path(net, 2, x_ref, x, steps=8, fraction=0.25)
        stacked = path.stacked()
        direction = np.sign(x.data - x_ref.data)
        moves = (stacked[1:] - stacked[:-1]) * direction
        assert moves.min() >= -1e-15

    def test_endpoint_is_bit_exact(self):
        net = TinyConvNet.initialized((4, 4, 1), seed=3)
        rng = np.random.default_rng(7)
        x_ref = Image(rng.random((4, 4, 1)))
        x = Image(rng.random((4, 4, 1)))
        path = guided_path(net, 0, x_ref, x, steps=5)
        assert np.array_equal(path.points[-1].data, x.data)

    def test_black_like_is_all_zeros(self):
        assert np.array_equal(black_like(vec_image(0.5, 0.9)).data,
                              np.zeros((1, 2, 1)))
