"""Dense image tensors and the filtering primitives the rest of the toolkit uses.

Images are H x W x C arrays of float64 intensities in [0, 1], row-major and
channel-interleaved.  Grayscale is C=1, RGB is C=3.  All operations are pure
and return new arrays; `Image` instances are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True)
class Image:
    """An H x W x C image with float64 intensities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise InvalidArgumentError(f"image must be 2-D or 3-D, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise InvalidArgumentError(f"image dimensions must be positive, got {h}x{w}")
        if c not in (1, 3):
            raise InvalidArgumentError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidArgumentError("image intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def same_shape(self, other: "Image") -> bool:
        return self.shape == other.shape


def as_array(x) -> np.ndarray:
    """Accept an Image or a raw array and return the (H, W, C) float64 array."""
    if isinstance(x, Image):
        return x.data
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian kernel truncated at radius ceil(4*sigma), renormalized to sum 1."""
    if not (sigma > 0.0) or not math.isfinite(sigma):
        raise InvalidArgumentError(f"sigma must be a positive finite real, got {sigma}")
    radius = math.ceil(4.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    # Edge-repeating reflection ("symmetric"): a symmetric normalized kernel
    # then conserves total mass exactly, which the blur invariants rely on.
    radius = len(kernel) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="symmetric")
    n = data.shape[axis]
    out = np.zeros_like(data)
    index = [slice(None)] * data.ndim
    for k, weight in enumerate(kernel):
        index[axis] = slice(k, k + n)
        out += weight * padded[tuple(index)]
    return out


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Separable Gaussian blur with reflected edges; output clamped to [0, 1]."""
    kernel = gaussian_kernel(sigma)
    blurred = _convolve_axis(img.data, kernel, axis=0)
    blurred = _convolve_axis(blurred, kernel, axis=1)
    return Image(np.clip(blurred, 0.0, 1.0))


def downsample2x(img: Image) -> Image:
    """2x2 average pooling; an odd trailing row/column is dropped."""
    h, w, c = img.shape
    if h < 2 or w < 2:
        raise InvalidArgumentError(f"image must be at least 2x2 to downsample, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    cropped = img.data[: 2 * h2, : 2 * w2, :]
    pooled = cropped.reshape(h2, 2, w2, 2, c).mean(axis=(1, 3))
    return Image(pooled)


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Affine map of min -> 0 and max -> 1; a constant array maps to all zeros."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgumentError("cannot normalize an empty array")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("cannot normalize non-finite values")
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


# --- binary PGM (P5) / PPM (P6) input and output, 8-bit, maxval 255 ---


def write_pnm(img: Image, path) -> None:
    """Write grayscale as binary PGM (P5) or RGB as binary PPM (P6)."""
    magic = b"P5" if img.channels == 1 else b"P6"
    levels = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    Path(path).write_bytes(header + levels.tobytes())


def _next_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    n = len(blob)
    while pos < n:
        if blob[pos : pos + 1].isspace():
            pos += 1
        elif blob[pos : pos + 1] == b"#":
            while pos < n and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    if pos >= n:
        raise ParseError("unexpected end of PNM header", offset=pos)
    start = pos
    while pos < n and not blob[pos : pos + 1].isspace():
        pos += 1
    return blob[start:pos], pos


def read_pnm(path) -> Image:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255."""
    blob = Path(path).read_bytes()
    magic, pos = _next_token(blob, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ParseError(f"not a binary PGM/PPM file (magic {magic!r})", offset=0)
    fields = []
    for _ in range(3):
        token, pos = _next_token(blob, pos)
        if not token.isdigit():
            raise ParseError(f"expected integer header field, got {token!r}", offset=pos)
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ParseError(f"bad raster dimensions {width}x{height}", offset=pos)
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    pos += 1  # single whitespace byte separates header from raster
    expected = height * width * channels
    raster = blob[pos : pos + expected]
    if len(raster) < expected:
        raise ParseError(
            f"raster truncated: expected {expected} bytes, found {len(raster)}",
            offset=pos + len(raster),
        )
    levels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return Image(levels.astype(np.float64) / 255.0)
