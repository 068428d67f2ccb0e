"""Small synthetic fundus-like images for demos and tests.

Vessels are random smooth polylines of varying width drawn darker than a
vignetted background, inside a circular field of view, with additive noise.
"""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .data import DatasetTag, FundusSample, write_png


def vessel_image(size: tuple[int, int], rng: np.random.Generator, n_vessels: int = 6):
    h, w = size
    gt = np.zeros((h, w), np.uint8)
    faint = np.zeros((h, w), np.float32)
    for _ in range(n_vessels):
        pts = [rng.uniform((0, 0), (w, h))]
        heading = rng.uniform(0, 2 * np.pi)
        for _ in range(int(rng.integers(4, 9))):
            heading += rng.normal(0, 0.5)
            step = rng.uniform(0.1, 0.25) * max(h, w)
            pts.append(pts[-1] + step * np.array([np.cos(heading), np.sin(heading)]))
        poly = np.round(np.array(pts)).astype(np.int32).reshape(-1, 1, 2)
        width = int(rng.integers(1, 4))
        contrast = rng.uniform(0.35, 1.0)
        layer = np.zeros((h, w), np.uint8)
        cv2.polylines(layer, [poly], isClosed=False, color=1, thickness=width)
        gt |= layer
        faint = np.maximum(faint, layer * contrast)
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot((yy - h / 2) / (h / 2), (xx - w / 2) / (w / 2))
    fov = (r < 0.95).astype(np.uint8)
    background = 150 - 40 * r**2
    green = background - 60 * faint + rng.normal(0, 6, size=(h, w))
    green = np.clip(green * fov, 0, 255).astype(np.uint8)
    rgb = np.stack([np.clip(green * 1.4, 0, 255), green, green * 0.5], axis=-1).astype(np.uint8)
    return rgb, gt * fov, fov


def make_samples(n: int, size=(64, 64), seed: int = 0, tag=DatasetTag.CUSTOM) -> list[FundusSample]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        rgb, gt, fov = vessel_image(size, rng)
        out.append(FundusSample(id=f"{i + 1:02d}", rgb=rgb, fov_mask=fov, gt=gt, dataset_tag=DatasetTag(tag)))
    return out


def write_dataset(
    root: str | Path,
    tag: DatasetTag | str = DatasetTag.CUSTOM,
    n: int = 8,
    size=(64, 64),
    seed: int = 0,
    with_masks: bool = True,
    stems: list[str] | None = None,
) -> Path:
    """Write ``n`` synthetic samples in the on-disk dataset layout; returns the dataset dir."""
    base = Path(root) / DatasetTag(tag).value
    for i, s in enumerate(make_samples(n, size, seed, tag)):
        stem = stems[i] if stems else s.id
        write_png(base / "images" / f"{stem}.png", s.rgb)
        write_png(base / "labels" / f"{stem}.png", s.gt * 255)
        if with_masks:
            write_png(base / "masks" / f"{stem}.png", s.fov_mask * 255)
    return base
