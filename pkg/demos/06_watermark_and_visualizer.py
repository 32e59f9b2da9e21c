"""Removing the watermark border and drawing annotations."""
# %%
import tempfile
from pathlib import Path

import numpy as np

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, LabeledObject, PolygonMask
from conetools.imaging import RasterImage, crop_annotation, crop_watermark, render_annotations

out_dir = Path(tempfile.mkdtemp())
img = RasterImage(np.full((800, 1000, 3), 90, dtype=np.uint8))
ann = AnnotatedImage("team-a_00001.png", 1000, 800, (
    LabeledObject(ConeClass.BLUE, BoundingBox(100, 100, 200, 200)),   # partly inside the border
    LabeledObject(ConeClass.YELLOW, BoundingBox(400, 400, 440, 470),
                  PolygonMask(((420, 402), (438, 468), (402, 468)))),
    LabeledObject(ConeClass.SMALL_ORANGE, BoundingBox(10, 10, 60, 60)),  # only in the border
))

# %% Crop 140 px off every side; annotations move with the pixels.
cropped = crop_watermark(img)
res = crop_annotation(ann)
print(cropped.width, cropped.height, "dropped", res.dropped, "clipped", res.clipped)
print(res.image.objects[0].box)

# %% Render boxes and the translucent mask.
vis = render_annotations(cropped, res.image)
vis.save(out_dir / "team-a_00001.viz.png")
print("wrote", out_dir / "team-a_00001.viz.png")
