"""Numerical stability of saliency maps under lossy compression.

An image is perturbed with a deterministic JPEG-style transform (8x8 block
DCT, luminance-table quantization at a given quality), the saliency map is
recomputed, and the two normalized maps are compared by MSE.  Results are
reported as -log MSE, capped at 40, where higher means more stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attribution import channel_collapse
from .errors import InvalidArgumentError
from .image import Image, minmax_normalize
from .methods import MethodSpec, compute_attribution, parse_method
from .models import DifferentiableModel

NEG_LOG_MSE_CAP = 40.0

# JPEG Annex K luminance quantization table.
_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix() -> np.ndarray:
    # Orthonormal 8-point DCT-II; matches the JPEG forward transform scaling.
    u = np.arange(8)[:, np.newaxis]
    x = np.arange(8)[np.newaxis, :]
    mat = np.cos(np.pi * (2 * x + 1) * u / 16.0) * np.sqrt(2.0 / 8.0)
    mat[0, :] = np.sqrt(1.0 / 8.0)
    return mat


_DCT = _dct_matrix()


def quantization_table(quality: int) -> np.ndarray:
    """Luminance table scaled by the libjpeg quality rule, entries in [1, 255]."""
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise InvalidArgumentError(f"quality must be in 1..100, got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    scaled = np.floor((_LUMA_TABLE * scale + 50.0) / 100.0)
    return np.clip(scaled, 1.0, 255.0)


def compress(img: Image, quality: int) -> Image:
    """Deterministic JPEG-style surrogate: blockwise DCT quantization round trip."""
    table = quantization_table(quality)
    h, w, c = img.shape
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    out = np.empty((h, w, c))
    for ch in range(c):
        plane = img.data[:, :, ch] * 255.0 - 128.0
        plane = np.pad(plane, ((0, pad_h), (0, pad_w)), mode="edge")
        hb, wb = plane.shape[0] // 8, plane.shape[1] // 8
        blocks = plane.reshape(hb, 8, wb, 8).transpose(0, 2, 1, 3)
        coeffs = np.einsum("ux,ijxy,vy->ijuv", _DCT, blocks, _DCT)
        coeffs = np.rint(coeffs / table) * table
        restored = np.einsum("ux,ijuv,vy->ijxy", _DCT, coeffs, _DCT)
        plane = restored.transpose(0, 2, 1, 3).reshape(hb * 8, wb * 8)
        out[:, :, ch] = (plane[:h, :w] + 128.0) / 255.0
    return Image(np.clip(out, 0.0, 1.0))


@dataclass(frozen=True)
class StabilityEntry:
    method: str
    image_id: str
    mse: float
    neg_log_mse: float


@dataclass(frozen=True)
class StabilityReport:
    method: str
    entries: tuple[StabilityEntry, ...]

    @property
    def median_mse(self) -> float:
        return float(np.median([e.mse for e in self.entries]))

    @property
    def median_neg_log_mse(self) -> float:
        return float(np.median([e.neg_log_mse for e in self.entries]))


def capped_neg_log(mse: float) -> float:
    if mse <= 0.0 or mse < math.exp(-NEG_LOG_MSE_CAP):
        return NEG_LOG_MSE_CAP
    return min(-math.log(mse), NEG_LOG_MSE_CAP)


def saliency_mse(s1: np.ndarray, s2: np.ndarray) -> float:
    """Mean squared difference of two min-max-normalized saliency maps."""
    a = minmax_normalize(s1)
    b = minmax_normalize(s2)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def stability_mse(method: str | MethodSpec, model: DifferentiableModel, c: int, img: Image,
                  quality: int = 75, steps: int = 32, image_id: str = "") -> StabilityEntry:
    """MSE between the saliency of `img` and of its compressed counterpart."""
    spec = parse_method(method) if isinstance(method, str) else method
    attr_clean = compute_attribution(spec, model, c, img, steps)
    attr_compressed = compute_attribution(spec, model, c, compress(img, quality), steps)
    mse = saliency_mse(channel_collapse(attr_clean), channel_collapse(attr_compressed))
    return StabilityEntry(method=spec.tag, image_id=image_id, mse=mse,
                          neg_log_mse=capped_neg_log(mse))
