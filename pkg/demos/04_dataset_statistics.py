"""Dataset statistics: counts, scene composition and box size histograms."""
# %%
import numpy as np

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, LabeledObject
from conetools.stats import compute_stats

rng = np.random.default_rng(1)
images = []
for k in range(500):
    n = int(rng.poisson(12))
    objs = []
    for _ in range(n):
        # blue/yellow dominate, like track borders
        cls = ConeClass(rng.choice(["blue", "yellow", "small_orange", "large_orange"], p=[0.45, 0.45, 0.07, 0.03]))
        size = rng.lognormal(2.5, 0.7)
        x, y = rng.uniform(0, 1280 - size), rng.uniform(0, 720 - size)
        objs.append(LabeledObject(cls, BoundingBox(x, y, x + size * 0.7, y + size)))
    images.append(AnnotatedImage(f"team-a_{k:05d}.png", 1280, 720, tuple(objs)))

report = compute_stats(images)
print("images", report.n_images, "cones", report.n_cones, "per image", round(report.cones_per_image, 2))
print("distinct classes per image", report.distinct_classes_hist)
print("combinations", report.class_combination_counts)

# %% Histograms as CSV for external plotting.
print(report.histogram_csv())
