"""Minimal run-length mask helpers for the worker side.

Canonical RLE: row-major runs alternating background/foreground, starting
with background; only the first run may be zero. This matches the
orchestrator's transport format byte for byte.
"""

from __future__ import annotations

from itertools import groupby


def encode_bitmap(bitmap: list[int]) -> list[int]:
    runs = [(value, len(list(group))) for value, group in groupby(bitmap)]
    out: list[int] = []
    if runs and runs[0][0] == 1:
        out.append(0)
    out.extend(length for _, length in runs)
    return out


def filled_box_rle(x: int, y: int, w: int, h: int, width: int, height: int) -> list[int]:
    """RLE of a box clipped to the frame and filled with foreground."""
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    bitmap = [0] * (width * height)
    for row in range(y0, y1):
        start = row * width + x0
        for i in range(start, row * width + x1):
            bitmap[i] = 1
    return encode_bitmap(bitmap)
