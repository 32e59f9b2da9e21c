"""Label sanity checks, the labeling-exam grader and contribution checks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .core import AnnotatedImage, ContractError, LabeledObject, iou
from .formats import FormatId, parse_annotation, validate_layout
from .similarity import FeatureVector, duplicate_scores

RULES = ("tiny_box", "out_of_bounds", "zero_area", "unknown_class", "duplicate_object", "orphan_pair", "dim_mismatch")
_SEVERITY = {
    "tiny_box": "warning",
    "out_of_bounds": "error",
    "zero_area": "error",
    "unknown_class": "warning",
    "duplicate_object": "warning",
    "orphan_pair": "error",
    "dim_mismatch": "error",
}


@dataclass(frozen=True)
class SanityConfig:
    min_area: float = 25.0
    min_side: float = 3.0
    duplicate_iou: float = 0.9


@dataclass(frozen=True)
class SanityFinding:
    image_ref: str
    object_index: Optional[int]
    rule_id: str
    severity: str
    message: str

    def sort_key(self):
        return (self.image_ref, -1 if self.object_index is None else self.object_index, self.rule_id)


def _finding(image: str, idx: Optional[int], rule: str, msg: str) -> SanityFinding:
    return SanityFinding(image, idx, rule, _SEVERITY[rule], msg)


def _check_image(img: AnnotatedImage, cfg: SanityConfig, dims: Optional[tuple[int, int]]) -> list[SanityFinding]:
    out = []
    if dims is not None and (img.width, img.height) != tuple(dims):
        out.append(_finding(img.name, None, "dim_mismatch",
                            f"annotation says {img.width}x{img.height}, image is {dims[0]}x{dims[1]}"))
    for i, obj in enumerate(img.objects):
        b = obj.box
        if obj.source_label is not None:
            out.append(_finding(img.name, i, "unknown_class", f"class {obj.source_label!r} is not in the taxonomy"))
        if b.width <= 0 or b.height <= 0:
            out.append(_finding(img.name, i, "zero_area", f"box {b.as_tuple()} has no area"))
            continue
        if b.area < cfg.min_area or min(b.width, b.height) < cfg.min_side:
            out.append(_finding(img.name, i, "tiny_box",
                                f"box {b.width:g}x{b.height:g} px below min area {cfg.min_area:g} or side {cfg.min_side:g}"))
        if not b.inside(img.width, img.height):
            out.append(_finding(img.name, i, "out_of_bounds", f"box {b.as_tuple()} exceeds {img.width}x{img.height}"))
    for i, a in enumerate(img.objects):
        if not a.box.is_valid:
            continue
        for j in range(i + 1, len(img.objects)):
            b = img.objects[j]
            if b.cls is a.cls and b.box.is_valid and iou(a.box, b.box) > cfg.duplicate_iou:
                out.append(_finding(img.name, j, "duplicate_object", f"same class as object {i} with IoU {iou(a.box, b.box):.3f}"))
    return out


def sanity_check(
    dataset: Sequence[AnnotatedImage],
    config: SanityConfig = SanityConfig(),
    image_dims: Optional[Mapping[str, tuple[int, int]]] = None,
) -> list[SanityFinding]:
    """Rule-based label checks; an empty result means every rule passed.

    ``image_dims`` maps image name to the decoded ``(width, height)`` and
    enables the ``dim_mismatch`` rule.
    """
    image_dims = image_dims or {}
    out = []
    for img in dataset:
        out.extend(_check_image(img, config, image_dims.get(img.name)))
    return sorted(out, key=SanityFinding.sort_key)


def sanity_check_tree(
    root: Union[str, Path], config: SanityConfig = SanityConfig(), img_dir: str = "img", ann_dir: str = "ann"
) -> list[SanityFinding]:
    """Sanity-check a dataset tree, including orphan pairs and real image sizes."""
    from PIL import Image

    layout, layout_findings = validate_layout(root, img_dir, ann_dir)
    out = [
        _finding(Path(f.path).name.removesuffix(".json"), None, "orphan_pair", f"{f.path}: {f.message}")
        for f in layout_findings
        if f.kind in ("orphan_image", "orphan_annotation")
    ]
    images, dims = [], {}
    for img_path, ann_path in layout.pairs():
        img = parse_annotation(ann_path.read_bytes(), FormatId.SUPERVISELY_LIKE, name=img_path.name, strict=False)
        with Image.open(img_path) as im:
            dims[img.name] = im.size
        images.append(img)
    out.extend(sanity_check(images, config, dims))
    return sorted(out, key=SanityFinding.sort_key)


# -- labeling exam -------------------------------------------------------

@dataclass(frozen=True)
class ExamConfig:
    match_iou: float = 0.7
    localization_iou: float = 0.3
    min_recall: float = 0.98
    min_precision: float = 0.98
    min_mean_iou: float = 0.85


@dataclass
class ImageGrade:
    image: str
    matched: list[tuple[int, int, float]] = field(default_factory=list)
    mislocalized: list[tuple[int, int, float]] = field(default_factory=list)
    missed: list[int] = field(default_factory=list)
    spurious: list[int] = field(default_factory=list)
    misclassified: list[tuple[int, int]] = field(default_factory=list)
    tag_mismatch: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class ExamReport:
    per_image: list[ImageGrade]
    recall: float
    precision: float
    mean_iou: float
    passed: bool
    reasons: list[str]

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def counts(self) -> dict[str, int]:
        keys = ("missed", "spurious", "mislocalized", "misclassified", "tag_mismatch")
        return {k: sum(len(getattr(g, k)) for g in self.per_image) for k in keys}

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "reasons": self.reasons,
            "aggregates": {"recall": self.recall, "precision": self.precision, "mean_iou": self.mean_iou},
            "counts": self.counts(),
            "per_image": [asdict(g) for g in self.per_image],
        }


def _greedy_pairs(gt: Sequence[LabeledObject], pred: Sequence[LabeledObject], floor: float,
                  used_g: set, used_p: set) -> list[tuple[int, int, float]]:
    cands = []
    for gi, g in enumerate(gt):
        if gi in used_g:
            continue
        for pi, p in enumerate(pred):
            if pi in used_p:
                continue
            v = iou(g.box, p.box)
            if v >= floor and v > 0:
                cands.append((-v, gi, pi))
    cands.sort()
    out = []
    for negv, gi, pi in cands:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        out.append((gi, pi, -negv))
    return out


def grade_image(gt: AnnotatedImage, sub: AnnotatedImage, config: ExamConfig = ExamConfig()) -> ImageGrade:
    used_g, used_p = set(), set()
    grade = ImageGrade(gt.name)
    grade.matched = sorted(_greedy_pairs(gt.objects, sub.objects, config.match_iou, used_g, used_p))
    grade.mislocalized = sorted(_greedy_pairs(gt.objects, sub.objects, config.localization_iou, used_g, used_p))
    grade.missed = [i for i in range(len(gt.objects)) if i not in used_g]
    grade.spurious = [i for i in range(len(sub.objects)) if i not in used_p]
    for gi, pi, _ in grade.matched:
        if gt.objects[gi].cls is not sub.objects[pi].cls:
            grade.misclassified.append((gi, pi))
        if gt.objects[gi].tags != sub.objects[pi].tags:
            grade.tag_mismatch.append((gi, pi))
    return grade


def grade_exam(
    submission: Sequence[AnnotatedImage],
    ground_truth: Sequence[AnnotatedImage],
    config: ExamConfig = ExamConfig(),
) -> ExamReport:
    """Compare a labeling-exam submission with hidden ground truth.

    Per image, predictions are matched one-to-one to ground truth greedily
    by descending IoU, keeping pairs with IoU >= ``match_iou``. Leftover
    pairs overlapping by at least ``localization_iou`` are reported as
    mislocalized instead of as a miss plus a spurious box. Recall and
    precision count only ``matched`` pairs.
    """
    subs = {s.name: s for s in submission}
    gts = {g.name: g for g in ground_truth}
    if set(subs) != set(gts):
        only_s = sorted(set(subs) - set(gts))
        only_g = sorted(set(gts) - set(subs))
        raise ContractError(f"image sets differ: only in submission {only_s}, only in ground truth {only_g}")
    grades = [grade_image(gts[n], subs[n], config) for n in sorted(gts)]
    n_gt = sum(len(g.objects) for g in ground_truth)
    n_pred = sum(len(s.objects) for s in submission)
    n_match = sum(len(g.matched) for g in grades)
    ious = [v for g in grades for _, _, v in g.matched]
    recall = n_match / n_gt if n_gt else 1.0
    precision = n_match / n_pred if n_pred else 1.0
    if ious:
        mean_iou = sum(ious) / len(ious)
    else:
        mean_iou = 1.0 if n_gt == 0 and n_pred == 0 else 0.0
    reasons = []
    if recall < config.min_recall:
        reasons.append(f"recall {recall:.4f} < {config.min_recall}")
    if precision < config.min_precision:
        reasons.append(f"precision {precision:.4f} < {config.min_precision}")
    if mean_iou < config.min_mean_iou:
        reasons.append(f"mean IoU {mean_iou:.4f} < {config.min_mean_iou}")
    return ExamReport(grades, recall, precision, mean_iou, not reasons, reasons)


def exam_feedback(report: ExamReport, submission: Sequence[AnnotatedImage] = (),
                  ground_truth: Sequence[AnnotatedImage] = ()) -> str:
    """Human-readable feedback, one line per problem object."""
    gts = {g.name: g for g in ground_truth}
    subs = {s.name: s for s in submission}

    def cls_of(table, name, idx):
        img = table.get(name)
        return f" ({img.objects[idx].cls.label})" if img is not None else ""

    lines = [f"verdict: {report.verdict.upper()}",
             f"recall {report.recall:.4f}  precision {report.precision:.4f}  mean IoU {report.mean_iou:.4f}"]
    lines += [f"  reason: {r}" for r in report.reasons]
    for g in report.per_image:
        issues = []
        issues += [f"  missed ground-truth object {i}{cls_of(gts, g.image, i)}" for i in g.missed]
        issues += [f"  spurious box {i}{cls_of(subs, g.image, i)}" for i in g.spurious]
        issues += [f"  object {gi} poorly placed by box {pi} (IoU {v:.3f})" for gi, pi, v in g.mislocalized]
        issues += [f"  object {gi} has wrong class in box {pi}" for gi, pi in g.misclassified]
        issues += [f"  object {gi} has wrong tags in box {pi}" for gi, pi in g.tag_mismatch]
        if issues:
            lines.append(f"{g.image}:")
            lines += issues
    return "\n".join(lines) + "\n"


# -- contribution requirements -------------------------------------------

@dataclass(frozen=True)
class ContributionConfig:
    min_onboard_ratio: float = 0.5
    max_local_dup_score: Optional[float] = None
    dup_threshold: float = 0.99


@dataclass
class RequirementResult:
    rule: str
    threshold: float
    observed: float
    passed: bool


@dataclass
class ContributionReport:
    onboard_ratio: float
    local_dup_score_99: float
    requirement_results: list[RequirementResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.requirement_results)

    def to_json(self) -> dict:
        return {"onboard_ratio": self.onboard_ratio, "local_dup_score_99": self.local_dup_score_99,
                "passed": self.passed, "requirements": [asdict(r) for r in self.requirement_results]}


def check_contribution(
    dataset: Sequence[AnnotatedImage],
    features: Sequence[FeatureVector],
    config: ContributionConfig = ContributionConfig(),
    jobs: int = 1,
) -> ContributionReport:
    """On-board share and local similarity requirements for a team dataset.

    The similarity rule is only evaluated when ``max_local_dup_score`` is set.
    """
    if not dataset:
        raise ContractError("empty dataset")
    missing = sorted(im.name for im in dataset if im.onboard is None)
    if missing:
        raise ContractError(f"scene_meta.onboard missing for {missing}")
    by_name = {f.name: f for f in features}
    uncovered = sorted(im.name for im in dataset if im.name not in by_name)
    if uncovered:
        raise ContractError(f"no feature vector for {uncovered}")
    ratio = sum(1 for im in dataset if im.onboard) / len(dataset)
    feats = [by_name[im.name] for im in dataset]
    score = duplicate_scores(feats, [config.dup_threshold], jobs)[config.dup_threshold]
    results = [RequirementResult("min_onboard_ratio", config.min_onboard_ratio, ratio, ratio >= config.min_onboard_ratio)]
    if config.max_local_dup_score is not None:
        results.append(RequirementResult("max_local_dup_score", config.max_local_dup_score, score,
                                         score <= config.max_local_dup_score))
    return ContributionReport(ratio, score, results)


def findings_json(findings: Sequence[SanityFinding]) -> str:
    return json.dumps([asdict(f) for f in findings], indent=2) + "\n"
