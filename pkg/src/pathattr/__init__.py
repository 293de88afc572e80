"""Path-based gradient attribution toolkit.

Implements straight-line, progressive-deblur and guided attribution paths,
the left-Riemann path integral and its per-step important-direction rewrite,
plus the evaluation suite (insertion scores, performance information curves
under entropy and MS-SSIM estimators, compression stability) at desk scale.
"""

from .attribution import (
    AttributionMap,
    channel_collapse,
    completeness_gap,
    idgi_attribution,
    load_attribution,
    projection_error_profile,
    projection_point,
    riemann_attribution,
    save_attribution,
)
from .errors import (
    BenchmarkError,
    DegenerateGradientError,
    InvalidArgumentError,
    ParseError,
    UnsupportedVersionError,
)
from .image import (
    Image,
    downsample2x,
    gaussian_blur,
    minmax_normalize,
    read_pnm,
    write_pnm,
)
from .methods import METHOD_TAGS, compute_attribution, parse_method
from .metrics import (
    MetricCurve,
    SsimParams,
    auc,
    bokeh_compose,
    insertion_curve,
    insertion_score,
    msssim,
    msssim_information,
    normalized_entropy,
    pic_curve,
    ssim,
    write_curve_csv,
)
from .models import (
    DifferentiableModel,
    LinearSoftmaxModel,
    QuadraticScoreModel,
    TinyConvNet,
    accuracy,
    finite_diff_gradient,
    gradient,
    load_model,
    predict,
    save_model,
    train_toy,
)
from .paths import PathSample, black_like, blur_path, guided_path, straight_line_path
from .stability import StabilityEntry, StabilityReport, compress, saliency_mse, stability_mse
from .toydata import ToyDataset, make_toy_dataset

__version__ = "0.1.0"
