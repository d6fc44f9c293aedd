"""Raster images, PPM codec, box/mask overlays, and side-by-side integration.

All operations are pure: they return new images and never mutate inputs, so
rendering the same scene twice produces byte-identical output.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .errors import EmptyList, FrameMismatch, TruncatedData, UnsupportedFormat
from .masks import mask_to_grid
from .types import BBox, InstanceMask

GOLDEN_ANGLE_DEG = 137.508

RGB = tuple[int, int, int]


class RasterImage:
    """Immutable row-major RGB8 image backed by a (h, w, 3) uint8 array."""

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def filled(cls, width: int, height: int, color: RGB = (0, 0, 0)) -> "RasterImage":
        data = np.empty((height, width, 3), dtype=np.uint8)
        data[:] = color
        return cls(data)

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (h, w, 3) view."""
        return self._data

    def writable_copy(self) -> np.ndarray:
        return self._data.copy()

    def pixel(self, x: int, y: int) -> RGB:
        return tuple(int(v) for v in self._data[y, x])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            np.array_equal(self._data, other._data)
        )

    def __repr__(self) -> str:
        return f"RasterImage({self.width}x{self.height})"


# ---------------------------------------------------------------------------
# PPM (P6, maxval 255)


def encode_ppm(image: RasterImage) -> bytes:
    """Byte-deterministic binary PPM: single-space header, newline, raw RGB."""
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def _next_ppm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":  # comment to end of line
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise TruncatedData("PPM header ended early")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> RasterImage:
    """Parse binary P6 with maxval 255; anything else is unsupported."""
    if len(data) < 2:
        raise TruncatedData("not enough bytes for a PPM magic number")
    magic = data[:2]
    if magic != b"P6":
        raise UnsupportedFormat(f"expected P6, got {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _next_ppm_token(data, pos)
        if not token.isdigit():
            raise UnsupportedFormat(f"bad PPM header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise UnsupportedFormat(f"bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = data[pos : pos + expected]
    if len(raster) < expected:
        raise TruncatedData(f"expected {expected} raster bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(arr)


# ---------------------------------------------------------------------------
# instance palette


def palette_color(instance_id: int) -> RGB:
    """Deterministic per-instance color: golden-angle hue walk at full
    saturation/value, so nearby instance ids land far apart on the wheel."""
    hue = (instance_id * GOLDEN_ANGLE_DEG) % 360.0
    r, g, b = colorsys.hsv_to_rgb(hue / 360.0, 1.0, 1.0)
    return tuple(int(np.floor(c * 255.0 + 0.5)) for c in (r, g, b))


# ---------------------------------------------------------------------------
# overlays


def draw_box(image: RasterImage, bbox: BBox, color: RGB, stroke: int = 3) -> RasterImage:
    """Rectangular outline drawn inward from the box edge; interior untouched."""
    clipped = bbox.clamped(image.width, image.height)
    if clipped is None:
        return image
    data = image.writable_copy()
    x0, y0 = clipped.x, clipped.y
    x1, y1 = clipped.x + clipped.w, clipped.y + clipped.h
    s = max(1, stroke)
    data[y0 : min(y0 + s, y1), x0:x1] = color
    data[max(y1 - s, y0) : y1, x0:x1] = color
    data[y0:y1, x0 : min(x0 + s, x1)] = color
    data[y0:y1, max(x1 - s, x0) : x1] = color
    return RasterImage(data)


def blend_mask(
    image: RasterImage, mask: InstanceMask, color: RGB, alpha: float = 0.5
) -> RasterImage:
    """Alpha-blend a color over the mask's foreground pixels.

    out = round((1-alpha)*src + alpha*color), rounding halves up; pixels
    outside the mask are bit-identical to the input.
    """
    if (mask.width, mask.height) != (image.width, image.height):
        raise FrameMismatch(
            f"mask frame {mask.width}x{mask.height} vs image "
            f"{image.width}x{image.height}"
        )
    grid = mask_to_grid(mask).astype(bool)
    data = image.writable_copy()
    src = data[grid].astype(np.float64)
    mixed = (1.0 - alpha) * src + alpha * np.asarray(color, dtype=np.float64)
    data[grid] = np.floor(mixed + 0.5).astype(np.uint8)
    return RasterImage(data)


def integrate(images: list[RasterImage]) -> RasterImage:
    """Concatenate left-to-right; shorter images are bottom-padded black."""
    if not images:
        raise EmptyList("integrate requires at least one image")
    if len(images) == 1:
        return images[0]
    height = max(im.height for im in images)
    width = sum(im.width for im in images)
    out = np.zeros((height, width, 3), dtype=np.uint8)
    x = 0
    for im in images:
        out[: im.height, x : x + im.width] = im.pixels
        x += im.width
    return RasterImage(out)
