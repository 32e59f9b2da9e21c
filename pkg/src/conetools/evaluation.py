"""Detection evaluation: greedy TP/FP matching and all-points interpolated
average precision over a sweep of IoU thresholds."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import AnnotatedImage, BoundingBox, ConeClass, ContractError, ParseError, iou

CLASS_AGNOSTIC = "class_agnostic"
PER_CLASS = "per_class"
DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(9))


@dataclass(frozen=True)
class Detection:
    image_ref: str
    box: BoundingBox
    cls: ConeClass
    confidence: float

    def __post_init__(self):
        self.box.validate()
        if not np.isfinite(self.confidence):
            raise ContractError(f"{self.image_ref}: non-finite confidence")


def _ranked(dets: Sequence[Detection]) -> list[int]:
    """Indices by descending confidence, ties broken by input order."""
    return sorted(range(len(dets)), key=lambda k: -dets[k].confidence)


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[AnnotatedImage],
    iou_thr: float,
    mode: str = CLASS_AGNOSTIC,
) -> np.ndarray:
    """TP flag for each detection, aligned with ``dets``.

    Within an image, detections are visited by descending confidence; each
    takes its best-IoU still-unmatched ground truth (same class in
    ``per_class`` mode) and is a TP iff that IoU reaches ``iou_thr``.
    """
    if mode not in (CLASS_AGNOSTIC, PER_CLASS):
        raise ContractError(f"unknown mode {mode!r}")
    by_name = {g.name: g for g in gts}
    unknown = sorted({d.image_ref for d in dets} - set(by_name))
    if unknown:
        raise ContractError(f"detections reference unknown images: {unknown}")
    flags = np.zeros(len(dets), dtype=bool)
    groups: dict[str, list[int]] = {}
    for k in _ranked(dets):
        groups.setdefault(dets[k].image_ref, []).append(k)
    for name, order in groups.items():
        objs = by_name[name].objects
        taken = [False] * len(objs)
        for k in order:
            d = dets[k]
            best, best_j = -1.0, -1
            for j, o in enumerate(objs):
                if taken[j] or (mode == PER_CLASS and o.cls is not d.cls):
                    continue
                v = iou(d.box, o.box)
                if v > best:
                    best, best_j = v, j
            if best_j >= 0 and best >= iou_thr:
                taken[best_j] = True
                flags[k] = True
    return flags


def pr_curve(flags: Sequence[bool], n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (precision, recall) after each ranked detection."""
    if n_gt <= 0:
        raise ContractError("recall is undefined without ground-truth objects")
    f = np.asarray(flags, dtype=bool)
    tp = np.cumsum(f)
    fp = np.cumsum(~f)
    return tp / np.maximum(tp + fp, 1), tp / n_gt


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """Area under the monotone precision envelope (all-points interpolation).

    ``flags`` must already be ordered by descending confidence.
    """
    precision, recall = pr_curve(flags, n_gt)
    if precision.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


@dataclass
class ThresholdResult:
    ap: float
    precision: list[float]
    recall: list[float]
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    mode: str
    per_threshold: dict[float, ThresholdResult]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "per_threshold": {
                repr(t): {"ap": r.ap, "tp": r.tp, "fp": r.fp, "fn": r.fn} for t, r in self.per_threshold.items()
            },
        }

    def pr_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iou_threshold", "rank", "precision", "recall"])
        for t, r in self.per_threshold.items():
            for k, (p, rc) in enumerate(zip(r.precision, r.recall), start=1):
                w.writerow([repr(t), k, repr(p), repr(rc)])
        return buf.getvalue()


def ap_sweep(
    dets: Sequence[Detection],
    gts: Sequence[AnnotatedImage],
    thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    mode: str = CLASS_AGNOSTIC,
    jobs: int = 1,
) -> EvalReport:
    for t in thresholds:
        if not 0 < t <= 1:
            raise ContractError(f"IoU threshold {t} outside (0, 1]")
    n_gt = sum(len(g.objects) for g in gts)
    order = _ranked(dets)

    def one(t):
        flags = match_detections(dets, gts, t, mode)[order]
        precision, recall = pr_curve(flags, n_gt)
        tp = int(flags.sum())
        return t, ThresholdResult(average_precision(flags, n_gt), precision.tolist(), recall.tolist(),
                                  tp, len(flags) - tp, n_gt - tp)

    if jobs <= 1:
        results = list(map(one, thresholds))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, thresholds))
    return EvalReport(mode, dict(results))


# -- detection ingestion -------------------------------------------------

def parse_darknet_results(text: str, dims: Mapping[str, tuple[int, int]]) -> list[Detection]:
    """One detection per line: ``image class_index confidence cx cy w h``
    with normalized box coordinates."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 7:
            raise ParseError(f"line {lineno}: expected 7 fields, got {len(parts)}", offset=lineno)
        name = parts[0]
        if name not in dims:
            raise ContractError(f"line {lineno}: unknown image {name!r}")
        try:
            cls = ConeClass.from_index(int(parts[1]))
            conf, cx, cy, bw, bh = (float(p) for p in parts[2:])
        except ValueError as e:
            raise ParseError(f"line {lineno}: {e}", offset=lineno) from None
        w, h = dims[name]
        box = BoundingBox((cx - bw / 2) * w, (cy - bh / 2) * h, (cx + bw / 2) * w, (cy + bh / 2) * h)
        out.append(Detection(name, box, cls, conf))
    return out


def parse_detections_json(text: str) -> list[Detection]:
    """``[{"image": ..., "class": "blue_cone" | 0, "confidence": ..., "box": [x0, y0, x1, y1]}, ...]``"""
    try:
        items = json.loads(text)
        out = []
        for it in items:
            c = it["class"]
            cls = ConeClass.from_index(c) if isinstance(c, int) else ConeClass.from_label(c)
            out.append(Detection(it["image"], BoundingBox(*map(float, it["box"])), cls, float(it["confidence"])))
    except json.JSONDecodeError as e:
        raise ParseError(f"detections: {e.msg} at line {e.lineno}", offset=e.pos) from None
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ContractError):
            raise
        raise ParseError(f"detections: malformed entry ({type(e).__name__}: {e})") from None
    return out
