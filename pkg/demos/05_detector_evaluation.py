"""Average precision over a sweep of IoU thresholds.

A synthetic detector is accurate in position but systematically a little
too small, so its AP falls off as the IoU requirement tightens.
"""
# %%
import numpy as np

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, LabeledObject
from conetools.evaluation import Detection, ap_sweep

rng = np.random.default_rng(2)
gts, dets = [], []
for k in range(50):
    name = f"test_{k:05d}.png"
    objs = []
    for _ in range(int(rng.integers(3, 15))):
        w, h = rng.uniform(10, 40), rng.uniform(15, 60)
        x, y = rng.uniform(0, 1280 - w), rng.uniform(0, 720 - h)
        objs.append(LabeledObject(ConeClass.BLUE, BoundingBox(x, y, x + w, y + h)))
        if rng.random() < 0.9:
            s = rng.uniform(0.75, 0.95)
            dets.append(Detection(name, BoundingBox(x, y, x + w * s, y + h * s), ConeClass.BLUE, float(rng.random())))
    gts.append(AnnotatedImage(name, 1280, 720, tuple(objs)))

report = ap_sweep(dets, gts)
for t, r in report.per_threshold.items():
    print(f"IoU {t:.2f}  AP {r.ap:.3f}  tp {r.tp}  fp {r.fp}  fn {r.fn}")
