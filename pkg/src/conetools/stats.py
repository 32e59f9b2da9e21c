"""Dataset statistics: cone counts, scene composition and box sizes."""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import MAIN_CLASSES, AnnotatedImage, ConeClass, ContractError, ObjectTag

OBJECT_BUCKET = 5
OBJECT_CAP = 100
AREA_EDGES = np.logspace(-5, 0, 11)
CHUNK = 4096


@dataclass(frozen=True)
class StatsConfig:
    include_other: bool = False
    min_combination_fraction: float = 0.01


def object_bucket(n: int) -> str:
    if n >= OBJECT_CAP:
        return f"{OBJECT_CAP}+"
    lo = n // OBJECT_BUCKET * OBJECT_BUCKET
    return f"{lo}-{lo + OBJECT_BUCKET - 1}"


def object_bucket_labels() -> list[str]:
    return [object_bucket(k) for k in range(0, OBJECT_CAP + 1, OBJECT_BUCKET)]


def area_bucket_labels() -> list[str]:
    labels = [f"<{AREA_EDGES[0]:.0e}"]
    labels += [f"{lo:.1e}-{hi:.1e}" for lo, hi in zip(AREA_EDGES[:-1], AREA_EDGES[1:])]
    return labels


def area_bucket(rel: float) -> int:
    """Index into :func:`area_bucket_labels`; the top bucket includes 1.0."""
    if rel < AREA_EDGES[0]:
        return 0
    k = int(np.searchsorted(AREA_EDGES, rel, side="right"))
    return min(k, len(AREA_EDGES) - 1)


def combination_key(classes) -> str:
    present = [c.value for c in ConeClass if c in classes]
    return "+".join(present) if present else "none"


@dataclass
class _Partial:
    n_images: int = 0
    n_cones: int = 0
    distinct: Counter = field(default_factory=Counter)
    objects: Counter = field(default_factory=Counter)
    combos: Counter = field(default_factory=Counter)
    areas: Counter = field(default_factory=Counter)
    tags: Counter = field(default_factory=Counter)

    def merge(self, other: "_Partial") -> "_Partial":
        return _Partial(
            self.n_images + other.n_images,
            self.n_cones + other.n_cones,
            self.distinct + other.distinct,
            self.objects + other.objects,
            self.combos + other.combos,
            self.areas + other.areas,
            self.tags + other.tags,
        )


def _fold(images: Sequence[AnnotatedImage], include_other: bool) -> _Partial:
    p = _Partial()
    for img in images:
        objs = [o for o in img.objects if include_other or o.cls is not ConeClass.OTHER]
        p.n_images += 1
        p.n_cones += len(objs)
        classes = {o.cls for o in objs}
        p.distinct[sum(1 for c in MAIN_CLASSES if c in classes)] += 1
        p.objects[object_bucket(len(objs))] += 1
        p.combos[combination_key(classes)] += 1
        frame = float(img.width) * float(img.height)
        for o in objs:
            p.areas[area_bucket(o.box.area / frame)] += 1
            for t in o.tags:
                p.tags[t.value] += 1
    return p


@dataclass
class StatsReport:
    n_images: int
    n_cones: int
    cones_per_image: float
    distinct_classes_hist: dict[int, int]
    objects_per_image_hist: dict[str, int]
    class_combination_counts: dict[str, int]
    relative_box_area_hist: dict[str, int]
    tag_counts: dict[str, int]

    def to_json(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_cones": self.n_cones,
            "cones_per_image": self.cones_per_image,
            "distinct_classes_hist": {str(k): v for k, v in self.distinct_classes_hist.items()},
            "objects_per_image_hist": self.objects_per_image_hist,
            "class_combination_counts": self.class_combination_counts,
            "relative_box_area_hist": self.relative_box_area_hist,
            "tag_counts": self.tag_counts,
        }

    def histogram_csv(self) -> str:
        """All histograms as ``table,bucket,count`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["table", "bucket", "count"])
        for table, hist in (
            ("distinct_classes", self.distinct_classes_hist),
            ("objects_per_image", self.objects_per_image_hist),
            ("class_combinations", self.class_combination_counts),
            ("relative_box_area", self.relative_box_area_hist),
            ("tags", self.tag_counts),
        ):
            for k, v in hist.items():
                w.writerow([table, k, v])
        return buf.getvalue()


def compute_stats(dataset: Sequence[AnnotatedImage], config: StatsConfig = StatsConfig(), jobs: int = 1) -> StatsReport:
    """Fold a dataset into counts and histograms.

    Chunks of fixed size are folded independently and merged in order, so the
    result is identical for any ``jobs``.
    """
    if len(dataset) == 0:
        raise ContractError("cannot compute statistics of an empty dataset")
    chunks = [dataset[i : i + CHUNK] for i in range(0, len(dataset), CHUNK)]
    if jobs <= 1:
        parts = [_fold(c, config.include_other) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda c: _fold(c, config.include_other), chunks))
    total = _Partial()
    for p in parts:
        total = total.merge(p)

    min_count = config.min_combination_fraction * total.n_images
    combos: dict[str, int] = {}
    tail = 0
    for key, count in sorted(total.combos.items(), key=lambda kv: (-kv[1], kv[0])):
        if count < min_count:
            tail += count
        else:
            combos[key] = count
    if tail:
        combos["other"] = tail

    area_labels = area_bucket_labels()
    return StatsReport(
        n_images=total.n_images,
        n_cones=total.n_cones,
        cones_per_image=total.n_cones / total.n_images,
        distinct_classes_hist={k: total.distinct.get(k, 0) for k in range(len(MAIN_CLASSES) + 1)},
        objects_per_image_hist={b: total.objects.get(b, 0) for b in object_bucket_labels()},
        class_combination_counts=combos,
        relative_box_area_hist={area_labels[i]: total.areas.get(i, 0) for i in range(len(area_labels))},
        tag_counts={t.value: total.tags.get(t.value, 0) for t in ObjectTag},
    )
