"""Annotation formats (supervisely-like JSON, Darknet YOLO, Pascal VOC,
LabelBox export) and the on-disk dataset layout.

Supervisely-like document::

    {"size": {"width": W, "height": H},
     "objects": [{"classTitle": "blue_cone",
                  "geometryType": "rectangle" | "polygon",
                  "points": {"exterior": [[x, y], ...], "interior": [[[x, y], ...], ...]},
                  "tags": ["truncated", ...]}],
     "sceneMeta": {"onboard": true}}            # optional

Rectangles store two exterior points, top-left then bottom-right.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .core import (
    AnnotatedImage,
    BoundingBox,
    CapabilityError,
    ConeClass,
    ContractError,
    LabeledObject,
    ObjectTag,
    ParseError,
    PolygonMask,
    ValidationError,
    parse_image_name,
)

log = logging.getLogger(__name__)

Data = Union[bytes, str]


class FormatId(enum.Enum):
    SUPERVISELY_LIKE = "supervisely_like"
    DARKNET_YOLO = "darknet_yolo"
    PASCAL_VOC = "pascal_voc"
    LABELBOX = "labelbox"


WRITABLE = (FormatId.SUPERVISELY_LIKE, FormatId.DARKNET_YOLO, FormatId.PASCAL_VOC)
CONVERSIONS = (
    (FormatId.DARKNET_YOLO, FormatId.SUPERVISELY_LIKE),
    (FormatId.LABELBOX, FormatId.SUPERVISELY_LIKE),
    (FormatId.SUPERVISELY_LIKE, FormatId.DARKNET_YOLO),
    (FormatId.SUPERVISELY_LIKE, FormatId.PASCAL_VOC),
)

_TAG_BY_NAME = {t.value: t for t in ObjectTag}


def _text(data: Data) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"not valid UTF-8 at byte {e.start}", offset=e.start) from None
    return data


def _map_class(label: str) -> tuple[ConeClass, Optional[str]]:
    try:
        return ConeClass.from_label(label), None
    except ValueError:
        log.warning("unknown class %r mapped to other_cone", label)
        return ConeClass.OTHER, label


def _map_tags(names: Iterable[str], where: str) -> frozenset[ObjectTag]:
    tags = set()
    for n in names:
        if n not in _TAG_BY_NAME:
            raise ValidationError(f"{where}: unknown tag {n!r}")
        tags.add(_TAG_BY_NAME[n])
    return frozenset(tags)


def _ordered_tags(tags: Iterable[ObjectTag]) -> list[str]:
    return [t.value for t in ObjectTag if t in tags]


def _num(v: float):
    return int(v) if float(v).is_integer() else float(v)


def _check_objects(img: AnnotatedImage, fmt: FormatId) -> AnnotatedImage:
    for i, obj in enumerate(img.objects):
        if not obj.box.is_valid:
            raise ValidationError(f"{fmt.value}: object {i} has degenerate box {obj.box.as_tuple()}", i)
        if not obj.box.inside(img.width, img.height):
            raise ValidationError(
                f"{fmt.value}: object {i} box {obj.box.as_tuple()} lies outside the "
                f"{img.width}x{img.height} image",
                i,
            )
    return img


# -- supervisely-like ----------------------------------------------------

def _parse_supervisely(text: str, name: str, dims) -> AnnotatedImage:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"supervisely_like: {e.msg} at line {e.lineno} column {e.colno}", offset=e.pos) from None
    try:
        w, h = int(doc["size"]["width"]), int(doc["size"]["height"])
        objects = []
        for i, o in enumerate(doc.get("objects", [])):
            cls, source = _map_class(o["classTitle"])
            geom = o.get("geometryType", "rectangle")
            ext = [(float(x), float(y)) for x, y in o["points"]["exterior"]]
            tags = _map_tags(o.get("tags", []), f"object {i}")
            if geom == "rectangle":
                if len(ext) != 2:
                    raise ParseError(f"supervisely_like: object {i} rectangle needs 2 points", rule="geometry")
                (x0, y0), (x1, y1) = ext
                objects.append(LabeledObject(cls, BoundingBox(x0, y0, x1, y1), None, tags, source))
            elif geom == "polygon":
                holes = [[(float(x), float(y)) for x, y in hole] for hole in o["points"].get("interior", [])]
                mask = PolygonMask(tuple(ext), tuple(tuple(hl) for hl in holes))
                objects.append(LabeledObject(cls, mask.hull(), mask, tags, source))
            else:
                raise ParseError(f"supervisely_like: object {i} has unknown geometryType {geom!r}", rule="geometry")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ContractError):
            raise
        raise ParseError(f"supervisely_like: malformed document ({type(e).__name__}: {e})") from None
    if dims is not None and tuple(dims) != (w, h):
        raise ValidationError(f"supervisely_like: embedded size {w}x{h} differs from image {dims[0]}x{dims[1]}")
    return AnnotatedImage(name, w, h, tuple(objects), dict(doc.get("sceneMeta", {})))


def _write_supervisely(img: AnnotatedImage) -> bytes:
    objects = []
    for obj in img.objects:
        if obj.mask is not None:
            points = {
                "exterior": [[_num(x), _num(y)] for x, y in obj.mask.exterior],
                "interior": [[[_num(x), _num(y)] for x, y in h] for h in obj.mask.holes],
            }
            geom = "polygon"
        else:
            b = obj.box
            points = {"exterior": [[_num(b.x_min), _num(b.y_min)], [_num(b.x_max), _num(b.y_max)]], "interior": []}
            geom = "rectangle"
        objects.append(
            {
                "classTitle": obj.source_label or obj.cls.label,
                "geometryType": geom,
                "points": points,
                "tags": _ordered_tags(obj.tags),
            }
        )
    doc = {"size": {"width": img.width, "height": img.height}, "objects": objects}
    if img.scene_meta:
        doc["sceneMeta"] = dict(img.scene_meta)
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


# -- darknet yolo --------------------------------------------------------

_YOLO_EPS = 1e-6


def _parse_yolo(text: str, name: str, dims, strict: bool) -> AnnotatedImage:
    if dims is None:
        raise ContractError("darknet_yolo: image dimensions are required (coordinates are normalized)")
    w, h = int(dims[0]), int(dims[1])
    objects = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"darknet_yolo: line {lineno}: expected 5 fields, got {len(parts)}", offset=lineno)
        try:
            idx = int(parts[0])
            cx, cy, bw, bh = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"darknet_yolo: line {lineno}: non-numeric field", offset=lineno) from None
        i = len(objects)
        if strict:
            for label, v in (("cx", cx), ("cy", cy), ("width", bw), ("height", bh)):
                if not (-_YOLO_EPS <= v <= 1 + _YOLO_EPS) or not math.isfinite(v):
                    raise ValidationError(f"darknet_yolo: object {i} (line {lineno}): {label}={v} outside [0,1]", i)
            if cx - bw / 2 < -_YOLO_EPS or cx + bw / 2 > 1 + _YOLO_EPS or cy - bh / 2 < -_YOLO_EPS or cy + bh / 2 > 1 + _YOLO_EPS:
                raise ValidationError(f"darknet_yolo: object {i} (line {lineno}) extends past the image border", i)
        try:
            cls, source = ConeClass.from_index(idx), None
        except ValueError:
            log.warning("unknown class index %d mapped to other_cone", idx)
            cls, source = ConeClass.OTHER, str(idx)
        box = BoundingBox((cx - bw / 2) * w, (cy - bh / 2) * h, (cx + bw / 2) * w, (cy + bh / 2) * h)
        objects.append(LabeledObject(cls, box, None, frozenset(), source))
    return AnnotatedImage(name, w, h, tuple(objects))


def _write_yolo(img: AnnotatedImage) -> bytes:
    lines = []
    for obj in img.objects:
        if obj.mask is not None:
            raise CapabilityError("darknet_yolo: segmentation masks cannot be written (box-only format)")
        b = obj.box
        cx = (b.x_min + b.x_max) / 2 / img.width
        cy = (b.y_min + b.y_max) / 2 / img.height
        lines.append(
            "%d %.6f %.6f %.6f %.6f" % (obj.cls.index, cx, cy, b.width / img.width, b.height / img.height)
        )
    return "".join(line + "\n" for line in lines).encode("utf-8")


# -- pascal voc (1-based inclusive integer corners) ----------------------

def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def _write_voc(img: AnnotatedImage) -> bytes:
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = img.name
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(img.width)
    ET.SubElement(size, "height").text = str(img.height)
    ET.SubElement(size, "depth").text = "3"
    for obj in img.objects:
        if obj.mask is not None:
            raise CapabilityError("pascal_voc: segmentation masks cannot be written (box-only format)")
        o = ET.SubElement(root, "object")
        ET.SubElement(o, "name").text = obj.source_label or obj.cls.label
        ET.SubElement(o, "pose").text = "Unspecified"
        ET.SubElement(o, "truncated").text = "1" if ObjectTag.TRUNCATED in obj.tags else "0"
        ET.SubElement(o, "difficult").text = "0"
        bb = ET.SubElement(o, "bndbox")
        b = obj.box
        ET.SubElement(bb, "xmin").text = str(_round_half_up(b.x_min) + 1)
        ET.SubElement(bb, "ymin").text = str(_round_half_up(b.y_min) + 1)
        ET.SubElement(bb, "xmax").text = str(_round_half_up(b.x_max))
        ET.SubElement(bb, "ymax").text = str(_round_half_up(b.y_max))
        if obj.tags:
            tags = ET.SubElement(o, "tags")
            for t in _ordered_tags(obj.tags):
                ET.SubElement(tags, "tag").text = t
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def _parse_voc(text: str, name: str, dims) -> AnnotatedImage:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        line, col = e.position
        raise ParseError(f"pascal_voc: {e} (line {line}, column {col})", offset=line) from None
    try:
        size = root.find("size")
        w, h = int(size.findtext("width")), int(size.findtext("height"))
        objects = []
        for i, o in enumerate(root.findall("object")):
            cls, source = _map_class(o.findtext("name", "").strip())
            bb = o.find("bndbox")
            xmin, ymin, xmax, ymax = (float(bb.findtext(k)) for k in ("xmin", "ymin", "xmax", "ymax"))
            tag_el = o.find("tags")
            if tag_el is not None:
                tags = _map_tags([t.text.strip() for t in tag_el.findall("tag")], f"object {i}")
            else:
                tags = frozenset({ObjectTag.TRUNCATED}) if o.findtext("truncated", "0").strip() == "1" else frozenset()
            objects.append(LabeledObject(cls, BoundingBox(xmin - 1, ymin - 1, xmax, ymax), None, tags, source))
    except (AttributeError, TypeError, ValueError) as e:
        if isinstance(e, ContractError):
            raise
        raise ParseError(f"pascal_voc: malformed document ({type(e).__name__}: {e})") from None
    if dims is not None and tuple(dims) != (w, h):
        raise ValidationError(f"pascal_voc: embedded size {w}x{h} differs from image {dims[0]}x{dims[1]}")
    return AnnotatedImage(name or root.findtext("filename", ""), w, h, tuple(objects))


# -- labelbox export (parse only) ----------------------------------------

def _labelbox_tags(o: dict, where: str) -> frozenset[ObjectTag]:
    names = []
    for c in o.get("classifications", []):
        if "value" in c:
            names.append(c["value"])
        elif "answer" in c:
            names.append(c["answer"]["value"])
        for a in c.get("answers", []):
            names.append(a["value"])
    return _map_tags(names, where)


def _parse_labelbox(text: str, name: str, dims) -> AnnotatedImage:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"labelbox: {e.msg} at line {e.lineno} column {e.colno}", offset=e.pos) from None
    if isinstance(doc, list):
        if len(doc) != 1:
            raise ContractError(f"labelbox: expected exactly one data row, got {len(doc)}")
        doc = doc[0]
    try:
        media = doc.get("media_attributes") or {}
        if dims is None and "width" in media:
            dims = (media["width"], media["height"])
        if dims is None:
            raise ContractError("labelbox: image dimensions missing (no media_attributes and no img_dims)")
        name = name or doc.get("External ID", "")
        objects = []
        for i, o in enumerate(doc.get("Label", {}).get("objects", [])):
            cls, source = _map_class(o.get("value") or o["title"])
            bb = o["bbox"]
            top, left, bh, bw = (float(bb[k]) for k in ("top", "left", "height", "width"))
            tags = _labelbox_tags(o, f"object {i}")
            objects.append(LabeledObject(cls, BoundingBox(left, top, left + bw, top + bh), None, tags, source))
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        if isinstance(e, ContractError):
            raise
        raise ParseError(f"labelbox: malformed document ({type(e).__name__}: {e})") from None
    return AnnotatedImage(name, int(dims[0]), int(dims[1]), tuple(objects))


# -- public API ----------------------------------------------------------

def parse_annotation(
    data: Data,
    fmt: FormatId | str,
    img_dims: Optional[tuple[int, int]] = None,
    *,
    name: str = "",
    strict: bool = True,
) -> AnnotatedImage:
    """Parse one annotation document.

    Args:
        data: Raw document bytes or text.
        fmt: Source format.
        img_dims: ``(width, height)``; required for Darknet YOLO, cross-checked
            against the embedded size for the other formats.
        name: Image filename to attach.
        strict: When False, geometric validation is skipped so that
            degenerate or out-of-image boxes survive for sanity reporting.

    Raises:
        ParseError: Malformed syntax.
        ValidationError: Box out of range or degenerate (strict mode).
    """
    fmt = FormatId(fmt)
    text = _text(data)
    if fmt is FormatId.SUPERVISELY_LIKE:
        img = _parse_supervisely(text, name, img_dims)
    elif fmt is FormatId.DARKNET_YOLO:
        img = _parse_yolo(text, name, img_dims, strict)
    elif fmt is FormatId.PASCAL_VOC:
        img = _parse_voc(text, name, img_dims)
    else:
        img = _parse_labelbox(text, name, img_dims)
    return _check_objects(img, fmt) if strict else img


def write_annotation(img: AnnotatedImage, fmt: FormatId | str) -> bytes:
    fmt = FormatId(fmt)
    if fmt is FormatId.SUPERVISELY_LIKE:
        return _write_supervisely(img)
    if fmt is FormatId.DARKNET_YOLO:
        return _write_yolo(img)
    if fmt is FormatId.PASCAL_VOC:
        return _write_voc(img)
    raise CapabilityError(f"{fmt.value} is parse-only; writable formats: {', '.join(f.value for f in WRITABLE)}")


def convert(
    src: Data,
    src_fmt: FormatId | str,
    dst_fmt: FormatId | str,
    img_dims: Optional[tuple[int, int]] = None,
    *,
    name: str = "",
) -> bytes:
    src_fmt, dst_fmt = FormatId(src_fmt), FormatId(dst_fmt)
    if (src_fmt, dst_fmt) not in CONVERSIONS:
        supported = "; ".join(f"{a.value} -> {b.value}" for a, b in CONVERSIONS)
        raise CapabilityError(f"unsupported conversion {src_fmt.value} -> {dst_fmt.value}; supported: {supported}")
    return write_annotation(parse_annotation(src, src_fmt, img_dims, name=name), dst_fmt)


# -- dataset layout ------------------------------------------------------

@dataclass(frozen=True, order=True)
class LayoutFinding:
    path: str
    kind: str  # orphan_image | orphan_annotation | bad_filename | duplicate_name | bad_layout
    message: str = field(compare=False)


@dataclass
class TeamFolder:
    team_id: str
    images: list[str]
    annotations: list[str]


@dataclass
class DatasetLayout:
    root: Path
    teams: list[TeamFolder]
    img_dir: str = "img"
    ann_dir: str = "ann"

    def pairs(self) -> list[tuple[Path, Path]]:
        """(image path, annotation path) for every complete pair."""
        out = []
        for t in self.teams:
            anns = set(t.annotations)
            for im in t.images:
                if im + ".json" in anns:
                    base = self.root / t.team_id
                    out.append((base / self.img_dir / im, base / self.ann_dir / (im + ".json")))
        return out


def _listdir(path: Path) -> list[str]:
    try:
        return sorted(os.listdir(path))
    except OSError as e:
        raise OSError(f"cannot read directory {path}: {e.strerror}") from e


def validate_layout(
    root: Union[str, Path], img_dir: str = "img", ann_dir: str = "ann"
) -> tuple[DatasetLayout, list[LayoutFinding]]:
    """Check a ``<root>/<team>/{img,ann}/`` tree against the naming protocol.

    Returns the discovered layout and a sorted list of findings.
    """
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"dataset root {root} is not a readable directory")
    findings: list[LayoutFinding] = []
    teams = []
    seen: dict[tuple[str, int], list[str]] = {}

    def rel(p: Path) -> str:
        return p.relative_to(root).as_posix()

    for team in _listdir(root):
        tdir = root / team
        if not tdir.is_dir():
            findings.append(LayoutFinding(team, "bad_layout", "unexpected file at dataset root"))
            continue
        entries = _listdir(tdir)
        for e in entries:
            if e not in (img_dir, ann_dir):
                findings.append(LayoutFinding(rel(tdir / e), "bad_layout", f"team folder may only contain {img_dir}/ and {ann_dir}/"))
        for d in (img_dir, ann_dir):
            if d not in entries or not (tdir / d).is_dir():
                findings.append(LayoutFinding(rel(tdir / d), "bad_layout", f"missing {d}/ directory"))

        images, anns = [], []
        if (tdir / img_dir).is_dir():
            for f in _listdir(tdir / img_dir):
                try:
                    parsed = parse_image_name(f)
                except ParseError as e:
                    findings.append(LayoutFinding(rel(tdir / img_dir / f), "bad_filename", str(e)))
                    continue
                images.append(f)
                seen.setdefault((parsed.team_id, parsed.number), []).append(rel(tdir / img_dir / f))
        if (tdir / ann_dir).is_dir():
            for f in _listdir(tdir / ann_dir):
                stem = f[: -len(".json")] if f.endswith(".json") else None
                try:
                    if stem is None:
                        raise ParseError(f"{f!r}: annotation files must end in .json", rule="extension")
                    parse_image_name(stem)
                except ParseError as e:
                    findings.append(LayoutFinding(rel(tdir / ann_dir / f), "bad_filename", str(e)))
                    continue
                anns.append(f)
        ann_set, img_set = set(anns), set(images)
        for im in images:
            if im + ".json" not in ann_set:
                findings.append(LayoutFinding(rel(tdir / img_dir / im), "orphan_image", "no matching annotation file"))
        for a in anns:
            if a[: -len(".json")] not in img_set:
                findings.append(LayoutFinding(rel(tdir / ann_dir / a), "orphan_annotation", "no matching image file"))
        teams.append(TeamFolder(team, images, anns))

    for (team_id, number), paths in seen.items():
        if len(paths) > 1:
            for p in paths:
                findings.append(
                    LayoutFinding(p, "duplicate_name", f"({team_id}, {number:05d}) also used by {', '.join(q for q in paths if q != p)}")
                )
    return DatasetLayout(root, teams, img_dir, ann_dir), sorted(findings)


def load_annotations(path: Union[str, Path], *, strict: bool = True) -> list[AnnotatedImage]:
    """Load every supervisely-like ``*.json`` document under ``path``, sorted by name."""
    path = Path(path)
    files = sorted(path.rglob("*.json")) if path.is_dir() else [path]
    out = []
    for f in files:
        out.append(parse_annotation(f.read_bytes(), FormatId.SUPERVISELY_LIKE, name=f.name[: -len(".json")], strict=strict))
    return sorted(out, key=lambda im: im.name)
