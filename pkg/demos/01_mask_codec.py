"""Run-length masks and IoU: the transport format every worker speaks.

Run: python3 demos/01_mask_codec.py
"""

import numpy as np

from uvgpt.masks import box_as_mask, mask_iou, mask_to_grid, rle_decode, rle_encode
from uvgpt.types import BBox

# A mask is binary pixel membership. Encode stores alternating
# background/foreground run lengths, row-major, background first.
bitmap = np.array([
    [0, 0, 1, 1, 0],
    [0, 1, 1, 1, 0],
    [0, 0, 1, 0, 0],
], dtype=np.uint8)

mask = rle_encode(bitmap, width=5, height=3)
print("bitmap:")
print(bitmap)
print("runs:", mask.rle)                      # starts with a background run
print("foreground pixels:", mask.foreground_pixels())

# decode is the exact inverse
restored = rle_decode(mask).reshape(3, 5)
print("round-trip equal:", bool((restored == bitmap).all()))

# an all-foreground mask forces a zero-length leading background run
solid = rle_encode([1, 1, 1, 1], 2, 2)
print("all-foreground 2x2 runs:", solid.rle)  # (0, 4)

# IoU works across masks and boxes on the same frame
a = BBox(0, 0, 4, 4)
b = BBox(2, 0, 4, 4)
print("box-box IoU:", mask_iou(a, b))         # 8 / 24 = 1/3

box_mask = box_as_mask(a, 8, 8)
print("mask-box IoU (same box):", mask_iou(box_mask, a))
print("mask grid:")
print(mask_to_grid(box_mask))
