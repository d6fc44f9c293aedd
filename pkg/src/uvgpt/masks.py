"""Run-length mask codec and intersection-over-union.

RLE layout: row-major, runs alternate background/foreground starting with
background, so an all-foreground mask encodes as [0, n].
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from .errors import EmptyMask, FrameMismatch, LengthMismatch, SizeMismatch
from .types import BBox, InstanceMask

MaskOrBox = Union[InstanceMask, BBox]


def rle_encode(
    bitmap: Sequence[int] | np.ndarray,
    width: int,
    height: int,
    instance_id: int = 0,
) -> InstanceMask:
    """Encode a row-major binary grid into an InstanceMask."""
    flat = np.asarray(bitmap, dtype=np.uint8).ravel()
    if flat.size != width * height:
        raise SizeMismatch(f"bitmap has {flat.size} pixels, frame is {width}x{height}")
    flat = (flat != 0).astype(np.uint8)
    if not flat.any():
        raise EmptyMask("cannot encode a mask with zero foreground pixels")

    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    runs = (ends - starts).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return InstanceMask(instance_id=instance_id, width=width, height=height, rle=tuple(runs))


def decode_runs(rle: Sequence[int], width: int, height: int) -> np.ndarray:
    """Expand raw run lengths into a flat binary grid (no mask invariants)."""
    runs = np.asarray(rle, dtype=np.int64)
    if runs.sum() != width * height:
        raise LengthMismatch(
            f"runs sum to {int(runs.sum())}, frame is {width}x{height}"
        )
    values = np.zeros(len(runs), dtype=np.uint8)
    values[1::2] = 1
    return np.repeat(values, runs)


def rle_decode(mask: InstanceMask) -> np.ndarray:
    """Exact inverse of rle_encode: flat row-major binary grid."""
    return decode_runs(mask.rle, mask.width, mask.height)


def mask_to_grid(mask: InstanceMask) -> np.ndarray:
    """2-D (height, width) binary array view of a mask."""
    return rle_decode(mask).reshape(mask.height, mask.width)


def box_to_grid(box: BBox, width: int, height: int) -> np.ndarray:
    """Rasterize a box into a 2-D binary array on the given frame."""
    grid = np.zeros((height, width), dtype=np.uint8)
    clipped = box.clamped(width, height)
    if clipped is not None:
        grid[clipped.y : clipped.y + clipped.h, clipped.x : clipped.x + clipped.w] = 1
    return grid


def box_from_mask_frame(mask: InstanceMask) -> tuple[int, int]:
    return mask.width, mask.height


def mask_iou(a: MaskOrBox, b: MaskOrBox) -> float:
    """Pixel IoU of two masks/boxes sharing one frame; in [0, 1]."""
    if isinstance(a, BBox) and isinstance(b, BBox):
        ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
        iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
        inter = ix * iy
        union = a.area + b.area - inter
        return inter / union if union else 0.0

    frames = {(m.width, m.height) for m in (a, b) if isinstance(m, InstanceMask)}
    if len(frames) > 1:
        raise FrameMismatch(f"masks live on different frames: {sorted(frames)}")
    width, height = next(iter(frames))

    ga = mask_to_grid(a) if isinstance(a, InstanceMask) else box_to_grid(a, width, height)
    gb = mask_to_grid(b) if isinstance(b, InstanceMask) else box_to_grid(b, width, height)
    inter = int(np.logical_and(ga, gb).sum())
    union = int(np.logical_or(ga, gb).sum())
    return inter / union if union else 0.0


def box_as_mask(box: BBox, width: int, height: int, instance_id: int = 0) -> InstanceMask:
    """Filled-rectangle mask on the full image frame (segment fallback)."""
    return rle_encode(box_to_grid(box, width, height), width, height, instance_id)
