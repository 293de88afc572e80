"""Saliency evaluation metrics: insertion curves, performance information
curves (accuracy / softmax-ratio vs. estimated information), and their AUCs.

Two information estimators are available for the PIC family: a histogram
entropy proxy and multi-scale structural similarity.  Both are normalized so
the fully blurred base sits at 0 and the original image at 1.

All compositions rank pixels by saliency value with row-major tie-breaking,
so every metric here is invariant under strictly monotone transforms of the
saliency map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .image import Image, downsample2x, gaussian_blur

#: Classic five-scale MS-SSIM weights, renormalized to sum exactly 1
#: (the literature constants add up to 1.0001).
_RAW_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
DEFAULT_SCALE_WEIGHTS = tuple(w / sum(_RAW_SCALE_WEIGHTS) for w in _RAW_SCALE_WEIGHTS)

DEFAULT_PIC_FRACTIONS = (0.0, 0.005, 0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.14,
                         0.21, 0.3, 0.4, 0.5, 0.75, 1.0)
DEFAULT_PIC_BINS = 25
DEFAULT_INSERTION_STEPS = 32

#: Blur sigma used for the default bokeh base, relative to image size:
#: 8 pixels at the 16x16 toy scale.
BASE_SIGMA_FRACTION = 0.5


@dataclass(frozen=True)
class SsimParams:
    window: int = 8
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    scale_weights: tuple[float, ...] = DEFAULT_SCALE_WEIGHTS

    def __post_init__(self):
        if self.window < 2:
            raise InvalidArgumentError(f"window must be >= 2, got {self.window}")
        if abs(sum(self.scale_weights) - 1.0) > 1e-9:
            raise InvalidArgumentError("scale weights must sum to 1")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True)
class MetricCurve:
    """Ordered (x, y) samples with x nondecreasing in [0, 1] and y >= 0."""

    points: tuple[tuple[float, float], ...]
    x_semantics: str = "inserted-fraction"
    y_semantics: str = "probability"
    aggregation: str = "raw"

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        if not all(math.isfinite(v) for v in xs + ys):
            raise InvalidArgumentError("curve values must be finite")
        if any(x < 0.0 or x > 1.0 for x in xs):
            raise InvalidArgumentError("curve x values must lie in [0, 1]")
        if any(y < 0.0 for y in ys):
            raise InvalidArgumentError("curve y values must be nonnegative")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise InvalidArgumentError("curve x values must be nondecreasing")
        object.__setattr__(self, "points", pts)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def write_curve_csv(curve: MetricCurve, path) -> None:
    lines = ["x,y\n"] + [f"{x:.17g},{y:.17g}\n" for x, y in curve.points]
    Path(path).write_text("".join(lines), encoding="ascii")


def _to_gray(img: Image) -> np.ndarray:
    """Collapse RGB to one channel by mean; identity for grayscale."""
    return img.data.mean(axis=2)


def _window_means(arr: np.ndarray, window: int) -> np.ndarray:
    views = np.lib.stride_tricks.sliding_window_view(arr, (window, window))
    return views.mean(axis=(-2, -1))


def _ssim_components(a: np.ndarray, b: np.ndarray, params: SsimParams) -> tuple[float, float]:
    """(full ssim, contrast-structure-only mean) over uniform sliding windows."""
    w = params.window
    if w > min(a.shape):
        raise InvalidArgumentError(
            f"window {w} exceeds image extent {a.shape}"
        )
    mu_a = _window_means(a, w)
    mu_b = _window_means(b, w)
    var_a = _window_means(a * a, w) - mu_a**2
    var_b = _window_means(b * b, w) - mu_b**2
    cov = _window_means(a * b, w) - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    luminance = (2.0 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float((luminance * cs).mean()), float(cs.mean())


def ssim(a: Image, b: Image, params: SsimParams | None = None) -> float:
    """Mean structural similarity over uniform sliding windows, in [-1, 1]."""
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    params = params or SsimParams()
    full, _ = _ssim_components(_to_gray(a), _to_gray(b), params)
    return full


def msssim(a: Image, b: Image, params: SsimParams | None = None) -> float:
    """Multi-scale structural similarity.

    Contrast-structure terms are measured at every scale of a 2x-downsampled
    pyramid and the luminance term only at the coarsest; the product uses the
    configured scale weights as exponents.  When the image is too small for
    the full pyramid the scale count shrinks and the weights are renormalized;
    an 8x8 input against window 8 degenerates to plain single-window ssim.
    """
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    params = params or SsimParams()
    max_scales = len(params.scale_weights)
    extent = min(a.height, a.width)
    scales = 0
    for s in range(1, max_scales + 1):
        if extent >= params.window * (2 ** (s - 1)):
            scales = s
    if scales == 0:
        raise InvalidArgumentError(
            f"image extent {extent} is below the ssim window {params.window}"
        )
    weights = np.array(params.scale_weights[:scales])
    weights = weights / weights.sum()
    level_a = Image(_to_gray(a))
    level_b = Image(_to_gray(b))
    result = 1.0
    for s in range(scales):
        full, cs = _ssim_components(level_a.data[:, :, 0], level_b.data[:, :, 0], params)
        term = full if s == scales - 1 else cs  # luminance only at the coarsest scale
        term = max(term, 0.0)
        exponent = float(weights[s])
        result *= term if exponent == 1.0 else term**exponent
        if s != scales - 1:
            level_a = downsample2x(level_a)
            level_b = downsample2x(level_b)
    return float(result)


def _histogram_entropy_bits(gray: np.ndarray) -> float:
    """Shannon entropy (bits) of intensity jointly with horizontal gradient sign."""
    bins = np.clip(np.floor(gray * 256.0).astype(np.int64), 0, 255)
    signs = np.zeros(gray.shape, dtype=np.int64)
    signs[:, :-1] = np.sign(gray[:, 1:] - gray[:, :-1]).astype(np.int64)
    joint = bins * 3 + (signs + 1)
    counts = np.bincount(joint.reshape(-1), minlength=256 * 3)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def normalized_entropy(img: Image, base: Image, original: Image) -> float:
    """Histogram-entropy information level of `img`, scaled so base -> 0 and
    original -> 1, clamped to [0, 1].

    The proxy has a known blind spot: an original dominated by one flat region
    can carry no histogram-entropy excess over its blurred base, in which case
    the denominator guard returns 0 for every composition.
    """
    if img.shape != base.shape or img.shape != original.shape:
        raise InvalidArgumentError("img, base and original must share one shape")
    h_img = _histogram_entropy_bits(_to_gray(img))
    h_base = _histogram_entropy_bits(_to_gray(base))
    h_orig = _histogram_entropy_bits(_to_gray(original))
    denom = h_orig - h_base
    if denom < 1e-9:
        return 0.0
    return float(np.clip((h_img - h_base) / denom, 0.0, 1.0))


def msssim_information(img: Image, base: Image, original: Image,
                       params: SsimParams | None = None) -> float:
    """MS-SSIM-based information level with the same base->0, original->1 scaling."""
    if img.shape != base.shape or img.shape != original.shape:
        raise InvalidArgumentError("img, base and original must share one shape")
    m_img = msssim(img, original, params)
    m_base = msssim(base, original, params)
    denom = 1.0 - m_base
    if denom < 1e-9:
        return 0.0
    return float(np.clip((m_img - m_base) / denom, 0.0, 1.0))


INFORMATION_ESTIMATORS = {
    "entropy": normalized_entropy,
    "msssim": msssim_information,
}


def saliency_order(saliency: np.ndarray) -> np.ndarray:
    """Pixel indices by decreasing saliency; ties resolve in row-major order."""
    flat = np.asarray(saliency, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(flat)):
        raise InvalidArgumentError("saliency values must be finite")
    return np.argsort(-flat, kind="stable")


def default_base(original: Image) -> Image:
    """The informationless bokeh base: a strong Gaussian blur of the original."""
    sigma = BASE_SIGMA_FRACTION * min(original.height, original.width)
    return gaussian_blur(original, sigma)


def bokeh_compose(original: Image, base: Image, saliency: np.ndarray,
                  top_fraction: float) -> Image:
    """Reveal the `top_fraction` most salient pixels of `original` over `base`."""
    if original.shape != base.shape:
        raise InvalidArgumentError(f"shape mismatch: {original.shape} vs {base.shape}")
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.shape != (original.height, original.width):
        raise InvalidArgumentError(
            f"saliency shape {sal.shape} does not match image {original.shape[:2]}"
        )
    if not 0.0 <= top_fraction <= 1.0 or not math.isfinite(top_fraction):
        raise InvalidArgumentError(f"top_fraction must lie in [0, 1], got {top_fraction}")
    pixels = original.height * original.width
    k = int(math.floor(top_fraction * pixels + 0.5))
    mask = np.zeros(pixels, dtype=bool)
    mask[saliency_order(sal)[:k]] = True
    mask = mask.reshape(original.height, original.width)[:, :, np.newaxis]
    return Image(np.where(mask, original.data, base.data))


def insertion_curve(model, c: int, original: Image, saliency: np.ndarray,
                    base_mode: str = "blurred", steps: int = DEFAULT_INSERTION_STEPS) -> MetricCurve:
    """Class confidence as the top k/K salient pixels are revealed, k = 0..K."""
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    if base_mode == "blurred":
        base = default_base(original)
    elif base_mode == "black":
        base = Image(np.zeros(original.shape))
    else:
        raise InvalidArgumentError(f"unknown base mode {base_mode!r}")
    composed = [bokeh_compose(original, base, saliency, k / steps) for k in range(steps + 1)]
    probs = model.predict_many(composed)[:, model.check_class(c)]
    points = [(k / steps, float(probs[k])) for k in range(steps + 1)]
    return MetricCurve(points=tuple(points), x_semantics="inserted-fraction",
                       y_semantics="probability", aggregation="raw")


def auc(curve: MetricCurve) -> float:
    """Trapezoidal area normalized by the x extent."""
    xs, ys = curve.xs, curve.ys
    if len(xs) < 2:
        raise InvalidArgumentError("auc needs at least two curve points")
    span = xs[-1] - xs[0]
    if span <= 0.0:
        raise InvalidArgumentError("auc needs a positive x extent")
    return float(np.trapz(ys, xs) / span)


def insertion_score(curve: MetricCurve, mode: str = "probability",
                    p_original: float | None = None) -> float:
    """AUC of an insertion curve, optionally rescaled by the original's confidence."""
    if mode == "probability":
        return auc(curve)
    if mode != "probability-ratio":
        raise InvalidArgumentError(f"unknown insertion score mode {mode!r}")
    if p_original is None or not p_original > 0.0:
        raise InvalidArgumentError("probability-ratio mode needs p_original > 0")
    scaled = tuple((x, float(np.clip(y / p_original, 0.0, 1.0))) for x, y in curve.points)
    return auc(MetricCurve(points=scaled, y_semantics="probability-ratio"))


def pic_curve(model, c: int, original: Image, saliency: np.ndarray,
              estimator: str = "entropy",
              fractions: tuple[float, ...] = DEFAULT_PIC_FRACTIONS,
              bins: int = DEFAULT_PIC_BINS,
              y_mode: str = "accuracy",
              base: Image | None = None,
              ssim_params: SsimParams | None = None) -> MetricCurve:
    """Performance information curve over bokeh compositions.

    x is the estimated information level of each composition; y is correctness
    (accuracy mode) or the clamped ratio of the class probability to the
    original's (softmax-ratio mode).  Samples aggregate into uniform x bins,
    mean for accuracy and median for ratios; the curve is anchored at (0, 0),
    extended to (1, last bin value), and empty bins interpolate linearly.
    """
    if bins < 1:
        raise InvalidArgumentError(f"bins must be >= 1, got {bins}")
    if not fractions:
        raise InvalidArgumentError("fractions must be nonempty")
    if y_mode not in ("accuracy", "softmax-ratio"):
        raise InvalidArgumentError(f"unknown y mode {y_mode!r}")
    try:
        estimate = INFORMATION_ESTIMATORS[estimator]
    except KeyError:
        raise InvalidArgumentError(f"unknown information estimator {estimator!r}") from None
    c = model.check_class(c)
    if base is None:
        base = default_base(original)
    composed = [bokeh_compose(original, base, saliency, f) for f in fractions]
    if estimator == "msssim":
        xs = [estimate(img, base, original, ssim_params) for img in composed]
    else:
        xs = [estimate(img, base, original) for img in composed]
    probs = model.predict_many(composed)
    if y_mode == "accuracy":
        ys = (probs.argmax(axis=1) == c).astype(np.float64)
    else:
        p_original = float(model.predict(original)[c])
        if not p_original > 0.0:
            raise InvalidArgumentError("softmax-ratio mode needs a positive original confidence")
        ys = np.clip(probs[:, c] / p_original, 0.0, 1.0)

    bucket: dict[int, list[float]] = {}
    for x, y in zip(xs, ys):
        idx = min(int(x * bins), bins - 1)
        bucket.setdefault(idx, []).append(float(y))
    reduce = np.mean if y_mode == "accuracy" else np.median
    known_x = [0.0]
    known_y = [0.0]
    for idx in sorted(bucket):
        known_x.append((idx + 0.5) / bins)
        known_y.append(float(reduce(bucket[idx])))
    known_x.append(1.0)
    known_y.append(known_y[-1])  # extend the last populated bin to x = 1
    centers = [(idx + 0.5) / bins for idx in range(bins)]
    values = np.interp(centers, known_x, known_y)
    points = [(0.0, 0.0)] + list(zip(centers, values)) + [(1.0, known_y[-1])]
    return MetricCurve(points=tuple(points), x_semantics="information-level",
                       y_semantics="accuracy" if y_mode == "accuracy" else "probability-ratio",
                       aggregation="binned-mean" if y_mode == "accuracy" else "binned-median")
