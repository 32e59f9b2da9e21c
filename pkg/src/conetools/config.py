"""Tool configuration: one YAML file, environment overrides, CLI overrides.

Environment variables named ``CONETOOLS_<SECTION>__<KEY>`` override file
values, e.g. ``CONETOOLS_EXAM__MATCH_IOU=0.75``; values are parsed as YAML
scalars.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .core import ContractError
from .evaluation import CLASS_AGNOSTIC, DEFAULT_IOU_THRESHOLDS
from .imaging import WATERMARK_BORDER
from .quality import ContributionConfig, ExamConfig, SanityConfig
from .similarity import DEFAULT_MEMORY_CAP, DEFAULT_THRESHOLDS
from .stats import StatsConfig

ENV_PREFIX = "CONETOOLS_"


@dataclass(frozen=True)
class SimilarityConfig:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    sample_threshold: float = 0.99
    memory_cap: int = DEFAULT_MEMORY_CAP


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    mode: str = CLASS_AGNOSTIC


@dataclass(frozen=True)
class LayoutConfig:
    img_dir: str = "img"
    ann_dir: str = "ann"


@dataclass(frozen=True)
class ImagingConfig:
    border: int = WATERMARK_BORDER


@dataclass(frozen=True)
class ReportConfig:
    timestamp: bool = True


@dataclass(frozen=True)
class ToolConfig:
    similarity: SimilarityConfig = SimilarityConfig()
    exam: ExamConfig = ExamConfig()
    sanity: SanityConfig = SanityConfig()
    contribution: ContributionConfig = ContributionConfig()
    stats: StatsConfig = StatsConfig()
    eval: EvalConfig = EvalConfig()
    layout: LayoutConfig = LayoutConfig()
    imaging: ImagingConfig = ImagingConfig()
    report: ReportConfig = ReportConfig()
    jobs: int = 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return _listify(d)

    def override(self, section: str, **values) -> "ToolConfig":
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return dataclasses.replace(self, **{section: _coerce(type(getattr(self, section)), {**dataclasses.asdict(getattr(self, section)), **values})})


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _coerce(cls, values: Mapping[str, Any]):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise ContractError(f"unknown {cls.__name__} keys: {unknown}")
    out = {}
    for k, v in values.items():
        default = names[k].default
        if isinstance(default, tuple) and v is not None:
            v = tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))
        elif isinstance(default, bool):
            v = bool(v)
        elif isinstance(default, float) and v is not None:
            v = float(v)
        elif isinstance(default, int) and v is not None:
            v = int(v)
        out[k] = v
    return cls(**out)


def load_config(path: Optional[Union[str, Path]] = None, environ: Optional[Mapping[str, str]] = None) -> ToolConfig:
    raw: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ContractError(f"{path}: config must be a mapping")
    environ = os.environ if environ is None else environ
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX):].lower().split("__")
        parsed = yaml.safe_load(value)
        if len(parts) == 1:
            raw[parts[0]] = parsed
        elif len(parts) == 2:
            raw.setdefault(parts[0], {})[parts[1]] = parsed
        else:
            raise ContractError(f"bad config override variable {key}")

    base = ToolConfig()
    kwargs = {}
    for f in dataclasses.fields(ToolConfig):
        if f.name not in raw:
            continue
        if f.name == "jobs":
            kwargs["jobs"] = int(raw["jobs"])
        else:
            section = raw[f.name] or {}
            if not isinstance(section, dict):
                raise ContractError(f"config section {f.name!r} must be a mapping")
            kwargs[f.name] = _coerce(type(getattr(base, f.name)), {**dataclasses.asdict(getattr(base, f.name)), **section})
    unknown = sorted(set(raw) - {f.name for f in dataclasses.fields(ToolConfig)})
    if unknown:
        raise ContractError(f"unknown config sections: {unknown}")
    return dataclasses.replace(base, **kwargs)
