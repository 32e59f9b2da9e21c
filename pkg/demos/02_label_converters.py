"""Converting annotations between formats.

The supported directions are Darknet YOLO -> supervisely-like,
LabelBox -> supervisely-like, supervisely-like -> Darknet YOLO and
supervisely-like -> Pascal VOC.
"""
# %%
import json

from conetools.core import CapabilityError
from conetools.formats import CONVERSIONS, convert, parse_annotation

for src, dst in CONVERSIONS:
    print(f"{src.value} -> {dst.value}")

# %% YOLO coordinates are normalized, so the image size is required.
yolo = "0 0.250000 0.500000 0.100000 0.300000\n1 0.750000 0.500000 0.100000 0.300000\n"
sup = convert(yolo, "darknet_yolo", "supervisely_like", img_dims=(1280, 720))
print(sup.decode())

# %% Supervisely-like to Pascal VOC uses 1-based inclusive pixel corners.
print(convert(sup, "supervisely_like", "pascal_voc", name="team-a_00001.png").decode())

# %% LabelBox exports give top/left/height/width in pixels.
row = {"External ID": "team-a_00002.png", "media_attributes": {"width": 100, "height": 80},
       "Label": {"objects": [{"value": "large_orange_cone", "bbox": {"top": 20, "left": 10, "height": 40, "width": 20}}]}}
img = parse_annotation(json.dumps(row), "labelbox")
print(img.objects[0])

# %% Anything else is refused rather than silently approximated.
try:
    convert(sup, "supervisely_like", "labelbox")
except CapabilityError as e:
    print("refused:", e)
