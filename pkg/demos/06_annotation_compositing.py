"""Annotation output: boxes, per-instance colored masks, and side-by-side
integration, written as binary PPM files.

Run: python3 demos/06_annotation_compositing.py
Outputs land in demos/output/.
"""

from pathlib import Path

from uvgpt.masks import box_as_mask
from uvgpt.raster import (
    RasterImage,
    blend_mask,
    draw_box,
    encode_ppm,
    integrate,
    palette_color,
)
from uvgpt.types import BBox

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

# Start from a flat background and lay down two instances. Colors come from
# a golden-angle hue walk keyed by instance id, so adjacent instances are
# always visually distinct and re-rendering never reshuffles them.
canvas = RasterImage.filled(96, 64, (30, 34, 40))
instances = [BBox(8, 10, 30, 22), BBox(50, 24, 34, 28)]

for i, box in enumerate(instances):
    color = palette_color(i)
    mask = box_as_mask(box, canvas.width, canvas.height, instance_id=i)
    canvas = blend_mask(canvas, mask, color, alpha=0.5)   # translucent fill
    canvas = draw_box(canvas, box, color, stroke=3)       # solid outline

left_path = out_dir / "annotated_left.ppm"
left_path.write_bytes(encode_ppm(canvas))
print("wrote", left_path)

# A second, shorter frame shows bottom padding during integration
second = RasterImage.filled(48, 40, (40, 30, 30))
second = draw_box(second, BBox(6, 6, 30, 24), palette_color(2))
right_path = out_dir / "annotated_right.ppm"
right_path.write_bytes(encode_ppm(second))
print("wrote", right_path)

joined = integrate([canvas, second])
joined_path = out_dir / "integrated.ppm"
joined_path.write_bytes(encode_ppm(joined))
print("wrote", joined_path, f"({joined.width}x{joined.height}, "
      f"widths sum, shorter image black-padded)")

print()
print("palette walk:", [palette_color(i) for i in range(5)])
