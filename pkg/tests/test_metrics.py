import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathattr.attribution import channel_collapse, idgi_attribution
from pathattr.errors import InvalidArgumentError
from pathattr.image import Image, gaussian_blur
from pathattr.metrics import (
    MetricCurve,
    SsimParams,
    auc,
    bokeh_compose,
    default_base,
    insertion_curve,
    insertion_score,
    msssim,
    msssim_information,
    normalized_entropy,
    pic_curve,
    saliency_order,
    ssim,
    write_curve_csv,
)
from pathattr.models import LinearSoftmaxModel
from pathattr.paths import black_like, straight_line_path
from pathattr.toydata import make_toy_dataset


def naive_ssim(a: np.ndarray, b: np.ndarray, window: int = 8,
               k1: float = 0.01, k2: float = 0.03) -> float:
    """Direct-formula oracle with explicit loops over window positions."""
    c1, c2 = k1 * k1, k2 * k2
    h, w = a.shape
    values = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            wa = a[i : i + window, j : j + window]
            wb = b[i : i + window, j : j + window]
            mu_a, mu_b = wa.mean(), wb.mean()
            var_a = (wa * wa).mean() - mu_a * mu_a
            var_b = (wb * wb).mean() - mu_b * mu_b
            cov = (wa * wb).mean() - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def uniform_model(num_classes=3, shape=(16, 16, 1)):
    dim = int(np.prod(shape))
    return LinearSoftmaxModel(np.zeros((num_classes, dim)), np.zeros(num_classes), shape)


class TestSsim:
    def test_self_similarity_is_one(self):
        img = Image(np.random.default_rng(0).random((10, 10, 1)))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = Image(rng.random((9, 9, 1))), Image(rng.random((9, 9, 1)))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_two_constants_reduce_to_luminance_term(self):
        a = Image(np.zeros((8, 8, 1)))
        b = Image(np.ones((8, 8, 1)))
        c1 = (0.01 * 1.0) ** 2
        # variance terms vanish, so the cs factor is c2/c2 = 1
        assert ssim(a, b) == pytest.approx(c1 / (1.0 + c1), abs=1e-15)

    def test_matches_naive_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = rng.random((8, 8)), rng.random((8, 8))
            got = ssim(Image(a), Image(b))
            assert abs(got - naive_ssim(a, b)) <= 1e-10

    def test_oracle_on_larger_windows_grid(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((12, 11)), rng.random((12, 11))
        assert abs(ssim(Image(a), Image(b)) - naive_ssim(a, b)) <= 1e-10

    def test_rgb_collapses_by_mean(self):
        rng = np.random.default_rng(4)
        rgb = rng.random((8, 8, 3))
        gray = Image(rgb.mean(axis=2))
        assert ssim(Image(rgb), Image(rgb)) == pytest.approx(ssim(gray, gray), abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ssim(Image(np.zeros((8, 8, 1))), Image(np.zeros((9, 8, 1))))


class TestMsssim:
    def test_self_similarity_is_one(self):
        img = Image(np.random.default_rng(5).random((32, 32, 1)))
        assert msssim(img, img) == pytest.approx(1.0, abs=1e-9)

    def test_single_scale_fallback_equals_ssim(self):
        rng = np.random.default_rng(6)
        a, b = Image(rng.random((8, 8, 1))), Image(rng.random((8, 8, 1)))
        assert msssim(a, b) == pytest.approx(ssim(a, b), abs=1e-15)

    def test_similarity_decreases_with_blur_strength(self):
        img = make_toy_dataset(1, seed=9).images[0]
        values = [msssim(img, gaussian_blur(img, sigma)) for sigma in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_result_in_unit_interval_and_symmetric(self):
        rng = np.random.default_rng(7)
        a, b = Image(rng.random((16, 16, 1))), Image(rng.random((16, 16, 1)))
        value = msssim(a, b)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(msssim(b, a), abs=1e-12)

    def test_window_larger_than_image_rejected(self):
        with pytest.raises(InvalidArgumentError):
            msssim(Image(np.zeros((4, 4, 1))), Image(np.zeros((4, 4, 1))))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidArgumentError):
            SsimParams(scale_weights=(0.5, 0.6))


class TestNormalizedEntropy:
    def test_base_maps_to_zero(self):
        img = make_toy_dataset(2, seed=10).images[1]
        base = default_base(img)
        assert normalized_entropy(base, base, img) == 0.0

    def test_original_maps_to_one(self):
        img = make_toy_dataset(2, seed=10).images[1]
        base = default_base(img)
        assert normalized_entropy(img, base, img) == pytest.approx(1.0)

    def test_half_revealed_bokeh_strictly_between(self):
        img = make_toy_dataset(2, seed=10).images[1]
        base = default_base(img)
        saliency = np.asarray(img.data[:, :, 0])
        half = bokeh_compose(img, base, saliency, 0.5)
        value = normalized_entropy(half, base, img)
        assert 0.0 < value < 1.0

    def test_degenerate_denominator_returns_zero(self):
        # A large constant region can leave the original with no entropy excess
        # over the blurred base; the guard maps that case to 0.
        img = make_toy_dataset(2, seed=10).images[1]
        assert normalized_entropy(img, img, img) == 0.0

    def test_msssim_information_endpoints(self):
        img = make_toy_dataset(1, seed=11).images[0]
        base = default_base(img)
        assert msssim_information(base, base, img) == 0.0
        assert msssim_information(img, base, img) == pytest.approx(1.0)


class TestBokehCompose:
    def test_fraction_zero_is_base(self):
        rng = np.random.default_rng(12)
        original = Image(rng.random((6, 6, 1)))
        base = Image(rng.random((6, 6, 1)))
        out = bokeh_compose(original, base, rng.random((6, 6)), 0.0)
        assert np.array_equal(out.data, base.data)

    def test_fraction_one_is_original(self):
        rng = np.random.default_rng(13)
        original = Image(rng.random((6, 6, 1)))
        base = Image(rng.random((6, 6, 1)))
        out = bokeh_compose(original, base, rng.random((6, 6)), 1.0)
        assert np.array_equal(out.data, original.data)

    def test_quarter_fraction_reveals_exactly_the_argmax_pixel(self):
        original = Image(np.full((2, 2, 1), 1.0))
        base = Image(np.zeros((2, 2, 1)))
        saliency = np.array([[0.1, 0.9], [0.4, 0.2]])
        out = bokeh_compose(original, base, saliency, 0.25)
        assert out.data[0, 1, 0] == 1.0
        assert out.data.sum() == 1.0

    def test_ties_break_in_row_major_order(self):
        original = Image(np.full((2, 2, 1), 1.0))
        base = Image(np.zeros((2, 2, 1)))
        out = bokeh_compose(original, base, np.full((2, 2), 0.5), 0.5)
        assert out.data[0, :, 0] == pytest.approx([1.0, 1.0])
        assert out.data[1, :, 0] == pytest.approx([0.0, 0.0])

    def test_larger_fractions_reveal_supersets(self):
        rng = np.random.default_rng(14)
        original = Image(rng.random((5, 5, 1)))
        base = Image(np.zeros((5, 5, 1)))
        saliency = rng.random((5, 5))
        previous = np.zeros((5, 5), dtype=bool)
        for fraction in (0.0, 0.2, 0.4, 0.8, 1.0):
            out = bokeh_compose(original, base, saliency, fraction)
            revealed = out.data[:, :, 0] == original.data[:, :, 0]
            assert np.all(previous <= revealed)
            previous = revealed

    def test_invalid_fraction_rejected(self):
        img = Image(np.zeros((2, 2, 1)))
        with pytest.raises(InvalidArgumentError):
            bokeh_compose(img, img, np.zeros((2, 2)), 1.5)


class TestInsertionCurve:
    def test_final_point_matches_original_confidence(self):
        rng = np.random.default_rng(15)
        model = LinearSoftmaxModel(rng.normal(size=(3, 36)), np.zeros(3), (6, 6, 1))
        img = Image(rng.random((6, 6, 1)))
        curve = insertion_curve(model, 1, img, rng.random((6, 6)), steps=8)
        assert curve.points[-1][0] == 1.0
        assert curve.points[-1][1] == pytest.approx(model.predict(img)[1], abs=1e-12)

    def test_constant_model_gives_flat_curve(self):
        model = uniform_model(num_classes=4, shape=(4, 4, 1))
        img = Image(np.random.default_rng(16).random((4, 4, 1)))
        curve = insertion_curve(model, 0, img, np.arange(16.0).reshape(4, 4), steps=5)
        assert curve.ys == pytest.approx([0.25] * 6)
        assert auc(curve) == pytest.approx(0.25)

    def test_black_base_mode_starts_from_zero_image(self):
        rng = np.random.default_rng(17)
        model = LinearSoftmaxModel(rng.normal(size=(2, 16)), np.zeros(2), (4, 4, 1))
        img = Image(rng.random((4, 4, 1)))
        curve = insertion_curve(model, 0, img, rng.random((4, 4)), base_mode="black", steps=4)
        assert curve.points[0][1] == pytest.approx(model.predict(np.zeros((4, 4, 1)))[0])

    def test_invalid_steps_rejected(self):
        model = uniform_model(shape=(4, 4, 1))
        img = Image(np.zeros((4, 4, 1)))
        with pytest.raises(InvalidArgumentError):
            insertion_curve(model, 0, img, np.zeros((4, 4)), steps=0)

    def test_monotone_saliency_transform_leaves_curve_unchanged(self):
        rng = np.random.default_rng(18)
        model = LinearSoftmaxModel(rng.normal(size=(3, 16)), np.zeros(3), (4, 4, 1))
        img = Image(rng.random((4, 4, 1)))
        saliency = rng.normal(size=(4, 4))
        before = insertion_curve(model, 2, img, saliency, steps=6)
        after = insertion_curve(model, 2, img, np.exp(saliency), steps=6)
        assert before.points == after.points


class TestInsertionScore:
    def _flat_curve(self, y):
        return MetricCurve(points=((0.0, y), (1.0, y)))

    def test_flat_half_curve_scores_half(self):
        assert insertion_score(self._flat_curve(0.5)) == pytest.approx(0.5)

    def test_ratio_of_flat_curve_to_itself_is_one(self):
        assert insertion_score(self._flat_curve(0.5), "probability-ratio", 0.5) == \
            pytest.approx(1.0)

    def test_piecewise_curve_by_hand(self):
        curve = MetricCurve(points=((0.0, 0.0), (0.5, 0.0), (1.0, 1.0)))
        assert insertion_score(curve) == pytest.approx(0.25)

    def test_zero_p_original_rejected_in_ratio_mode(self):
        with pytest.raises(InvalidArgumentError):
            insertion_score(self._flat_curve(0.5), "probability-ratio", 0.0)


class TestAuc:
    def test_diagonal(self):
        assert auc(MetricCurve(points=((0.0, 0.0), (1.0, 1.0)))) == pytest.approx(0.5)

    def test_constant(self):
        assert auc(MetricCurve(points=((0.0, 0.7), (0.4, 0.7), (1.0, 0.7)))) == \
            pytest.approx(0.7)

    def test_two_trapezoids_by_hand(self):
        curve = MetricCurve(points=((0.0, 0.0), (0.25, 1.0), (1.0, 1.0)))
        assert auc(curve) == pytest.approx(0.875)

    def test_single_point_rejected(self):
        with pytest.raises(InvalidArgumentError):
            auc(MetricCurve(points=((0.5, 0.5),)))

    def test_normalized_by_x_extent(self):
        curve = MetricCurve(points=((0.2, 1.0), (0.7, 1.0)))
        assert auc(curve) == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12),
           st.floats(0.0, 0.5))
    def test_pointwise_domination_implies_auc_order(self, ys, lift):
        xs = np.linspace(0.0, 1.0, len(ys))
        low = MetricCurve(points=tuple(zip(xs, ys)))
        high = MetricCurve(points=tuple(zip(xs, [min(1.0, y + lift) for y in ys])))
        assert auc(high) >= auc(low) - 1e-12


class TestMetricCurveType:
    def test_rejects_decreasing_x(self):
        with pytest.raises(InvalidArgumentError):
            MetricCurve(points=((0.5, 0.0), (0.2, 0.0)))

    def test_rejects_negative_y_and_out_of_range_x(self):
        with pytest.raises(InvalidArgumentError):
            MetricCurve(points=((0.0, -0.1), (1.0, 0.0)))
        with pytest.raises(InvalidArgumentError):
            MetricCurve(points=((0.0, 0.0), (1.5, 0.0)))

    def test_csv_export_format(self, tmp_path):
        curve = MetricCurve(points=((0.0, 0.0), (1.0, 1.0 / 3.0)))
        path = tmp_path / "curve.csv"
        write_curve_csv(curve, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y"
        assert lines[2] == "1,0.33333333333333331"


class TestPicCurve:
    def test_uniform_saliency_ratio_mode_endpoints(self):
        rng = np.random.default_rng(19)
        model = LinearSoftmaxModel(rng.normal(size=(3, 256)), np.zeros(3), (16, 16, 1))
        img = make_toy_dataset(1, seed=20).images[0]
        curve = pic_curve(model, 0, img, np.ones((16, 16)), fractions=(0.0, 1.0),
                          y_mode="softmax-ratio")
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_accuracy_values_are_indicator_based(self):
        rng = np.random.default_rng(20)
        model = LinearSoftmaxModel(rng.normal(size=(3, 256)), np.zeros(3), (16, 16, 1))
        img = make_toy_dataset(1, seed=21).images[0]
        c = int(model.predict(img).argmax())
        curve = pic_curve(model, c, img, np.asarray(img.data[:, :, 0]), fractions=(1.0,),
                          y_mode="accuracy")
        assert curve.points[-1] == (1.0, 1.0)
        assert all(0.0 <= y <= 1.0 for _, y in curve.points)

    def test_monotone_saliency_transform_leaves_curve_unchanged(self):
        rng = np.random.default_rng(21)
        model = LinearSoftmaxModel(rng.normal(size=(3, 256)), np.zeros(3), (16, 16, 1))
        img = make_toy_dataset(1, seed=22).images[0]
        saliency = rng.normal(size=(16, 16))
        before = pic_curve(model, 0, img, saliency, estimator="msssim")
        after = pic_curve(model, 0, img, 2.0 * saliency + 1.0, estimator="msssim")
        assert before.points == after.points

    def test_unknown_estimator_rejected(self):
        model = uniform_model()
        img = make_toy_dataset(1, seed=23).images[0]
        with pytest.raises(InvalidArgumentError):
            pic_curve(model, 0, img, np.zeros((16, 16)), estimator="zip")

    def test_idgi_saliency_beats_random_permutations(self, toy_model, correctly_classified):
        rng = np.random.default_rng(24)
        wins = []
        for img, label in correctly_classified[:20]:
            path = straight_line_path(black_like(img), img, 16)
            attr = idgi_attribution(toy_model, label, path)
            saliency = channel_collapse(attr)
            real = auc(pic_curve(toy_model, label, img, saliency, estimator="msssim",
                                 y_mode="softmax-ratio"))
            randoms = []
            for _ in range(10):
                shuffled = rng.permutation(saliency.reshape(-1)).reshape(saliency.shape)
                randoms.append(auc(pic_curve(toy_model, label, img, shuffled,
                                             estimator="msssim", y_mode="softmax-ratio")))
            wins.append(real - float(np.median(randoms)))
        assert np.median(wins) > 0


class TestSaliencyOrder:
    def test_orders_by_value_then_row_major(self):
        saliency = np.array([[0.5, 0.9], [0.9, 0.1]])
        assert list(saliency_order(saliency)) == [1, 2, 0, 3]

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            saliency_order(np.array([[np.nan, 0.0]]))
