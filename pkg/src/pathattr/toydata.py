"""Procedural desk-scale dataset: filled squares, disks and crosses on noise.

Stands in for a real image benchmark so attribution experiments run in
seconds.  Regeneration is fully determined by the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError
from .image import Image, read_pnm, write_pnm

CLASS_NAMES = ("square", "disk", "cross")


@dataclass
class ToyDataset:
    images: list[Image]
    labels: list[int]
    seed: int
    num_classes: int = 3

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise InvalidArgumentError("images and labels must have equal length")
        for label in self.labels:
            if not 0 <= label < self.num_classes:
                raise InvalidArgumentError(f"label {label} out of range")


def _draw_shape(canvas: np.ndarray, label: int, cy: int, cx: int, r: int, value: float) -> None:
    h, w = canvas.shape
    ys, xs = np.mgrid[0:h, 0:w]
    dy, dx = ys - cy, xs - cx
    if label == 0:  # square
        mask = (np.abs(dy) <= r) & (np.abs(dx) <= r)
    elif label == 1:  # disk
        mask = dy * dy + dx * dx <= r * r
    else:  # cross
        mask = ((np.abs(dx) <= 1) & (np.abs(dy) <= r)) | ((np.abs(dy) <= 1) & (np.abs(dx) <= r))
    canvas[mask] = value


def make_toy_dataset(count: int, seed: int, height: int = 16, width: int = 16) -> ToyDataset:
    """`count` grayscale images, classes cycling square/disk/cross.

    Shape radius is fixed at 4: with varying radii the per-class pixel masses
    overlap and the one-conv-layer reference net cannot reach the accuracy the
    benchmark suite relies on.
    """
    if count < 1:
        raise InvalidArgumentError("count must be positive")
    rng = np.random.default_rng(seed)
    images, labels = [], []
    margin, radius = 6, 4
    for i in range(count):
        label = i % 3
        canvas = rng.uniform(0.05, 0.25, size=(height, width))
        cy = int(rng.integers(margin, height - margin + 1))
        cx = int(rng.integers(margin, width - margin + 1))
        value = float(rng.uniform(0.85, 0.95))
        _draw_shape(canvas, label, cy, cx, radius, value)
        images.append(Image(canvas))
        labels.append(label)
    return ToyDataset(images=images, labels=labels, seed=seed)


# --- manifest: one "path,label" record per line, paths relative to the manifest ---


def write_manifest(path, records: list[tuple[str, int]]) -> None:
    lines = [f"{rel},{label}\n" for rel, label in records]
    Path(path).write_text("".join(lines), encoding="ascii")


def read_manifest(path) -> list[tuple[str, int]]:
    records = []
    text = Path(path).read_text(encoding="ascii")
    offset = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped:
            rel, sep, label = stripped.rpartition(",")
            if not sep or not rel or not label.lstrip("-").isdigit():
                raise ParseError(f"manifest line {lineno} is not 'path,label'", offset=offset)
            records.append((rel, int(label)))
        offset += len(line) + 1
    return records


def load_manifest_images(manifest_path) -> tuple[list[str], list[Image], list[int]]:
    """Resolve a manifest and load its images; returns (ids, images, labels)."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    ids, images, labels = [], [], []
    for rel, label in read_manifest(manifest_path):
        ids.append(rel)
        images.append(read_pnm(base / rel))
        labels.append(label)
    return ids, images, labels


def save_dataset(dataset: ToyDataset, out_dir, manifest_name: str = "manifest.csv",
                 prefix: str = "img") -> Path:
    """Write every image as PGM plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i, (img, label) in enumerate(zip(dataset.images, dataset.labels)):
        rel = f"images/{prefix}_{i:04d}.pgm"
        write_pnm(img, out_dir / rel)
        records.append((rel, label))
    manifest = out_dir / manifest_name
    write_manifest(manifest, records)
    return manifest
