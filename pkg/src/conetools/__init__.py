"""Curation and quality-assurance tools for cone-annotation datasets."""

from .core import (
    AnnotatedImage,
    BoundingBox,
    CapabilityError,
    ConeClass,
    ContractError,
    ImageName,
    LabeledObject,
    ObjectTag,
    ParseError,
    PolygonMask,
    ValidationError,
    iou,
    label_name_for,
    parse_image_name,
)

__version__ = "0.1.0"
