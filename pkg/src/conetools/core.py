"""Domain model shared by every tool: cone taxonomy, box geometry and the
``<team-ID>_<5-digit-number>.<suffix>`` filename protocol."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class ParseError(ContractError):
    """Malformed text or bytes. ``rule`` names the violated rule."""

    def __init__(self, message: str, rule: str = "syntax", offset: Optional[int] = None):
        super().__init__(message)
        self.rule = rule
        self.offset = offset


class ValidationError(ContractError):
    """Well-formed input whose values break an invariant."""

    def __init__(self, message: str, object_index: Optional[int] = None):
        super().__init__(message)
        self.object_index = object_index


class CapabilityError(ContractError):
    """Requested operation is not supported (e.g. a conversion direction)."""


class ConeClass(enum.Enum):
    BLUE = "blue"
    YELLOW = "yellow"
    SMALL_ORANGE = "small_orange"
    LARGE_ORANGE = "large_orange"
    OTHER = "other"

    @property
    def label(self) -> str:
        """On-disk class name, e.g. ``blue_cone``."""
        return f"{self.value}_cone"

    @property
    def index(self) -> int:
        return _CLASS_ORDER.index(self)

    @classmethod
    def from_label(cls, label: str) -> "ConeClass":
        try:
            return _LABEL_TO_CLASS[label]
        except KeyError:
            raise ValueError(f"unknown class label {label!r}") from None

    @classmethod
    def from_index(cls, index: int) -> "ConeClass":
        if not 0 <= index < len(_CLASS_ORDER):
            raise ValueError(f"class index {index} outside 0..{len(_CLASS_ORDER) - 1}")
        return _CLASS_ORDER[index]


_CLASS_ORDER = list(ConeClass)
_LABEL_TO_CLASS = {c.label: c for c in ConeClass}
MAIN_CLASSES = tuple(c for c in ConeClass if c is not ConeClass.OTHER)


class ObjectTag(enum.Enum):
    KNOCKED_OVER = "knocked_over"
    TRUNCATED = "truncated"
    TAPE_REMOVED_OR_STICKER = "tape_removed_or_sticker"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates, origin top-left.

    Construction does not validate; call :meth:`validate` or use
    :attr:`is_valid`. Degenerate boxes must be representable so that
    sanity checks can report them.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def is_valid(self) -> bool:
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        return all(v == v and abs(v) != float("inf") for v in vals) and (
            self.x_min < self.x_max and self.y_min < self.y_max
        )

    def validate(self) -> "BoundingBox":
        if not self.is_valid:
            raise ContractError(f"invalid box {self.as_tuple()}: need x_min < x_max and y_min < y_max")
        return self

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def clip(self, width: float, height: float) -> "BoundingBox":
        return BoundingBox(
            float(min(max(self.x_min, 0.0), width)),
            float(min(max(self.y_min, 0.0), height)),
            float(min(max(self.x_max, 0.0), width)),
            float(min(max(self.y_max, 0.0), height)),
        )

    def intersects(self, width: float, height: float) -> bool:
        """True if the box overlaps the image rectangle with positive area."""
        return self.x_min < width and self.x_max > 0 and self.y_min < height and self.y_max > 0

    def inside(self, width: float, height: float) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= width and self.y_max <= height


Point = tuple[float, float]


@dataclass(frozen=True)
class PolygonMask:
    exterior: tuple[Point, ...]
    holes: tuple[tuple[Point, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exterior", tuple((float(x), float(y)) for x, y in self.exterior))
        object.__setattr__(
            self, "holes", tuple(tuple((float(x), float(y)) for x, y in h) for h in self.holes)
        )
        if len(self.exterior) < 3:
            raise ContractError("polygon exterior needs at least 3 vertices")

    def hull(self) -> BoundingBox:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return BoundingBox(min(xs), min(ys), max(xs), max(ys))

    def translate(self, dx: float, dy: float) -> "PolygonMask":
        return PolygonMask(
            tuple((x + dx, y + dy) for x, y in self.exterior),
            tuple(tuple((x + dx, y + dy) for x, y in h) for h in self.holes),
        )

    def clip(self, width: float, height: float) -> "PolygonMask":
        def clamp(pts):
            return tuple((float(min(max(x, 0.0), width)), float(min(max(y, 0.0), height))) for x, y in pts)

        return PolygonMask(clamp(self.exterior), tuple(clamp(h) for h in self.holes))


@dataclass(frozen=True)
class LabeledObject:
    """One annotated cone.

    ``source_label`` keeps the raw class name when it could not be mapped
    and ``cls`` fell back to :attr:`ConeClass.OTHER`.
    """

    cls: ConeClass
    box: BoundingBox
    mask: Optional[PolygonMask] = None
    tags: frozenset[ObjectTag] = frozenset()
    source_label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))


@dataclass(frozen=True)
class AnnotatedImage:
    name: str
    width: int
    height: int
    objects: tuple[LabeledObject, ...] = ()
    scene_meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ContractError(f"{self.name}: image dimensions must be positive, got {self.width}x{self.height}")

    @property
    def onboard(self) -> Optional[bool]:
        value = self.scene_meta.get("onboard")
        return None if value is None else bool(value)

    def with_objects(self, objects: Sequence[LabeledObject]) -> "AnnotatedImage":
        return AnnotatedImage(self.name, self.width, self.height, tuple(objects), dict(self.scene_meta))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two valid boxes."""
    a.validate()
    b.validate()
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


# -- filename protocol ---------------------------------------------------

IMAGE_EXTENSIONS = ("png", "jpg", "jpeg")
_TEAM_RE = re.compile(r"[a-z0-9-]+")
_NAME_RE = re.compile(r"^(?P<team>.*)_(?P<number>\d{5})\.(?P<ext>[^.]+)$")


@dataclass(frozen=True)
class ImageName:
    team_id: str
    number: int
    extension: str
    raw_extension: Optional[str] = field(default=None, compare=False)

    def __str__(self) -> str:
        return f"{self.team_id}_{self.number:05d}.{self.extension}"

    @property
    def on_disk(self) -> str:
        """Filename with the extension spelled as it was parsed."""
        return f"{self.team_id}_{self.number:05d}.{self.raw_extension or self.extension}"


def parse_image_name(s: str) -> ImageName:
    """Parse ``<team-ID>_<5-digit-number>.<suffix>``.

    Raises:
        ParseError: with ``rule`` one of ``extension``, ``number``,
            ``team_empty``, ``team_charset``.
    """
    if "." not in s:
        raise ParseError(f"{s!r}: missing image extension", rule="extension")
    ext = s.rsplit(".", 1)[1]
    if ext.lower() not in IMAGE_EXTENSIONS:
        raise ParseError(
            f"{s!r}: unsupported extension {ext!r} (expected one of {', '.join(IMAGE_EXTENSIONS)})",
            rule="extension",
        )
    m = _NAME_RE.match(s)
    if m is None:
        raise ParseError(f"{s!r}: expected '_<5-digit-number>' before the extension", rule="number")
    team = m["team"]
    if not team:
        raise ParseError(f"{s!r}: empty team id", rule="team_empty")
    if not _TEAM_RE.fullmatch(team):
        raise ParseError(f"{s!r}: team id {team!r} must match [a-z0-9-]+", rule="team_charset")
    return ImageName(team, int(m["number"]), ext.lower(), raw_extension=ext)


def label_name_for(img: ImageName) -> str:
    return f"{img}.json"
