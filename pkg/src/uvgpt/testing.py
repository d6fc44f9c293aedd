"""Synthetic scene builders for tests, demos, and protocol conformance runs.

A "scene" is a flat-color image with solid rectangles for objects plus the
matching ground-truth fixture, so fixture-driven workers behave like perfect
models on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .masks import rle_encode
from .protocol import TruthFixture, TruthObject, save_truth, truth_path_for
from .raster import RasterImage, encode_ppm
from .types import BBox


@dataclass(frozen=True)
class SceneObject:
    class_label: str
    bbox: BBox
    confidence: float = 0.9
    color: tuple[int, int, int] = (200, 200, 200)
    inset_mask: int = 0  # >0: ship an explicit mask inset by this many pixels


def build_scene(
    width: int,
    height: int,
    objects: list[SceneObject],
    background: tuple[int, int, int] = (16, 24, 32),
) -> tuple[RasterImage, TruthFixture]:
    data = np.empty((height, width, 3), dtype=np.uint8)
    data[:] = background
    truth_objects = []
    for obj in objects:
        b = obj.bbox
        data[b.y : b.y + b.h, b.x : b.x + b.w] = obj.color
        mask_rle = None
        if obj.inset_mask > 0:
            inset = obj.inset_mask
            inner = BBox(b.x + inset, b.y + inset, b.w - 2 * inset, b.h - 2 * inset)
            if inner.area / b.area < 0.5:
                raise ValueError(
                    f"inset {inset} on {b} drops mask/box IoU below 0.5; "
                    f"use a larger box or smaller inset"
                )
            grid = np.zeros((height, width), dtype=np.uint8)
            grid[inner.y : inner.y + inner.h, inner.x : inner.x + inner.w] = 1
            mask_rle = rle_encode(grid, width, height).rle
        truth_objects.append(
            TruthObject(
                class_label=obj.class_label,
                bbox=b,
                confidence=obj.confidence,
                mask_rle=mask_rle,
            )
        )
    return RasterImage(data), TruthFixture(objects=tuple(truth_objects))


def write_scene(
    directory: str | Path,
    stem: str,
    image: RasterImage,
    truth: TruthFixture,
) -> Path:
    """Write `<stem>.ppm` plus its truth sidecar; returns the image path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image_path = directory / f"{stem}.ppm"
    image_path.write_bytes(encode_ppm(image))
    save_truth(truth, truth_path_for(image_path))
    return image_path
