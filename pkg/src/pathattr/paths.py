"""Discretized attribution paths: straight line, progressive deblur, guided.

Every generator returns a `PathSample` whose last point equals the input
bit-exactly; accumulated float drift is closed in the final step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .image import Image, gaussian_blur
from .models import DifferentiableModel

#: Default squared blur scale for the deblur path.  sqrt(128/2) = 8 pixels of
#: Gaussian sigma, which reduces a 16x16 toy image to near-uniform (its
#: structural similarity to the sharp input falls under 0.1).
DEFAULT_BLUR_MAX_SCALE = 128.0

#: Default fraction of still-moving coordinates advanced per guided step.
DEFAULT_GUIDED_FRACTION = 0.25


@dataclass(frozen=True)
class PathSample:
    """Ordered points x_0..x_N plus the parameter grid that produced them."""

    points: list[Image]
    alphas: list[float]
    method: str
    baseline: str = ""

    def __post_init__(self):
        if len(self.points) != len(self.alphas):
            raise InvalidArgumentError("points and alphas must have equal length")
        if len(self.points) < 2:
            raise InvalidArgumentError("a path needs at least two points")
        shape = self.points[0].shape
        for p in self.points:
            if p.shape != shape:
                raise InvalidArgumentError("all path points must share one shape")
        diffs = np.diff(np.asarray(self.alphas, dtype=np.float64))
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise InvalidArgumentError("alphas must be strictly monotone")

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    def stacked(self) -> np.ndarray:
        """All points as one (N+1, H, W, C) array."""
        return np.stack([p.data for p in self.points])


def black_like(x: Image) -> Image:
    return Image(np.zeros(x.shape))


def straight_line_path(x_ref: Image, x: Image, steps: int) -> PathSample:
    """points[j] = x_ref + (j/N)(x - x_ref); the standard interpolation path."""
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    if x_ref.shape != x.shape:
        raise InvalidArgumentError(f"shape mismatch: {x_ref.shape} vs {x.shape}")
    diff = x.data - x_ref.data
    points = [x_ref]
    for j in range(1, steps):
        points.append(Image(x_ref.data + (j / steps) * diff))
    points.append(x)
    alphas = [j / steps for j in range(steps + 1)]
    return PathSample(points=points, alphas=alphas, method="straight-line", baseline="reference")


def blur_path(x: Image, max_scale: float = DEFAULT_BLUR_MAX_SCALE, steps: int = 16) -> PathSample:
    """Progressive deblur: squared scale alpha_j = max_scale (1 - j/N)^2, ending at x.

    The quadratic grid concentrates samples near the sharp end, where the
    image changes fastest.  The blur sigma is sqrt(alpha/2), i.e. alpha is
    the variance-doubled scale of the blurring kernel.
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    if not max_scale > 0:
        raise InvalidArgumentError(f"max_scale must be positive, got {max_scale}")
    points, alphas = [], []
    for j in range(steps):
        alpha = max_scale * (1.0 - j / steps) ** 2
        points.append(gaussian_blur(x, np.sqrt(alpha / 2.0)))
        alphas.append(alpha)
    points.append(x)
    alphas.append(0.0)
    return PathSample(points=points, alphas=alphas, method="blur", baseline="max-blur")


def guided_path(model: DifferentiableModel, c: int, x_ref: Image, x: Image, steps: int,
                fraction: float = DEFAULT_GUIDED_FRACTION) -> PathSample:
    """Greedy low-gradient-first schedule from x_ref to x.

    Each step spends an equal share of the remaining L1 distance, moving the
    `fraction` of still-open coordinates whose current |gradient| is smallest
    (extending to the next-smallest ones if those saturate first).  Movement
    within the chosen set is proportional to each coordinate's remaining
    distance, so fraction=1 reproduces the straight-line path.
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    if x_ref.shape != x.shape:
        raise InvalidArgumentError(f"shape mismatch: {x_ref.shape} vs {x.shape}")
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError(f"fraction must be in (0, 1], got {fraction}")
    target = x.data.reshape(-1)
    current = x_ref.data.reshape(-1).copy()
    points = [x_ref]
    alphas = [0.0]
    for step in range(1, steps + 1):
        if step == steps:
            points.append(x)  # close every residual exactly
            alphas.append(1.0)
            break
        remaining_steps = steps - step + 1
        grad = np.abs(model.gradient(Image(current.reshape(x.shape)), c).reshape(-1))
        gap = target - current
        budget = np.abs(gap).sum() / remaining_steps
        while budget > 0.0:
            open_idx = np.flatnonzero(current != target)
            if open_idx.size == 0:
                break
            k = max(1, int(np.ceil(fraction * open_idx.size)))
            # stable sort keeps row-major order among equal gradients
            chosen = open_idx[np.argsort(grad[open_idx], kind="stable")[:k]]
            dist = np.abs(gap[chosen]).sum()
            if dist <= budget:
                current[chosen] = target[chosen]
                budget -= dist
            else:
                current[chosen] += gap[chosen] * (budget / dist)
                budget = 0.0
            gap = target - current
        points.append(Image(current.reshape(x.shape).copy()))
        alphas.append(step / steps)
    return PathSample(points=points, alphas=alphas, method="guided", baseline="reference")
