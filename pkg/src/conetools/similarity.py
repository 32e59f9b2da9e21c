"""Image similarity scoring for duplicate control and diverse sampling.

Pairwise cosine similarity is computed on a fixed block grid so that every
entry is produced by the same floating-point operations no matter how many
workers share the grid.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .core import ContractError, ParseError

FEATURE_DIM = 4096
DEFAULT_THRESHOLDS = (0.95, 0.98, 0.99)
BLOCK = 256
DEFAULT_MEMORY_CAP = 2 * 1024**3


class FormatError(ParseError):
    """Corrupt or incompatible FSFV feature file."""


@dataclass(frozen=True)
class FeatureVector:
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ContractError(f"{self.name}: feature vector must be 1-D and non-empty")
        if not np.all(np.isfinite(v)):
            raise ContractError(f"{self.name}: feature vector has non-finite entries")
        if not np.any(v):
            raise ContractError(f"{self.name}: zero feature vector")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class SimilarityMatrix:
    order: list[str]
    entries: np.ndarray

    @property
    def n(self) -> int:
        return len(self.order)


@dataclass
class ScoreReport:
    thresholds: list[float]
    per_dataset: dict[str, dict[float, float]]
    global_: dict[float, float]
    n_images: dict[str, int] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        rows = []
        for ds in sorted(self.per_dataset):
            for t in self.thresholds:
                rows.append({"scope": "local", "dataset_id": ds, "threshold": t,
                             "score": self.per_dataset[ds][t], "n_images": self.n_images[ds]})
        n_all = sum(self.n_images.values())
        for t in self.thresholds:
            rows.append({"scope": "global", "dataset_id": "*", "threshold": t, "score": self.global_[t], "n_images": n_all})
        return rows

    def to_json(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "per_dataset": {ds: {repr(t): s for t, s in v.items()} for ds, v in sorted(self.per_dataset.items())},
            "global": {repr(t): s for t, s in self.global_.items()},
            "n_images": dict(sorted(self.n_images.items())),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["scope", "dataset_id", "threshold", "score", "n_images"], lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({**r, "score": repr(r["score"])})
        return buf.getvalue()


def cosine(x: FeatureVector | np.ndarray, y: FeatureVector | np.ndarray) -> float:
    """Cosine similarity ``<x, y> / (|x| |y|)``."""
    a = np.asarray(getattr(x, "values", x), dtype=np.float64)
    b = np.asarray(getattr(y, "values", y), dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ContractError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# -- feature extraction --------------------------------------------------

GRID = 16
TILE = 8
ORIENT_BINS = 12


def extract_features(image, size: int = GRID * TILE) -> np.ndarray:
    """Deterministic 4096-d tiled color/gradient descriptor.

    The image is resized (bilinear) to 128x128 and split into a 16x16 grid of
    8x8 tiles. Each tile contributes mean R, G, B, the standard deviation of
    intensity, and a 12-bin unsigned gradient-orientation histogram weighted
    by gradient magnitude (central differences, averaged over the tile
    pixels). The concatenated vector is L2-normalized.

    Args:
        image: A path, a PIL image, or an ``(H, W, 3)`` uint8 array.
    """
    from PIL import Image, UnidentifiedImageError

    if isinstance(image, (str, Path)):
        try:
            with Image.open(image) as im:
                pil = im.convert("RGB")
        except (UnidentifiedImageError, OSError) as e:
            raise ContractError(f"cannot decode image {image}: {e}") from None
    elif isinstance(image, np.ndarray):
        pil = Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), "RGB")
    else:
        pil = image.convert("RGB")
    if size != GRID * TILE:
        raise ContractError(f"resize target must be {GRID * TILE}")
    rgb = np.asarray(pil.resize((size, size), Image.BILINEAR), dtype=np.float64) / 255.0
    inten = rgb @ np.array([0.299, 0.587, 0.114])

    padded = np.pad(inten, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((ang * (ORIENT_BINS / np.pi)).astype(np.int64), ORIENT_BINS - 1)

    def tiles(a):
        return a.reshape(GRID, TILE, GRID, TILE, *a.shape[2:]).swapaxes(1, 2).reshape(GRID * GRID, TILE * TILE, *a.shape[2:])

    t_rgb, t_int, t_mag, t_bin = tiles(rgb), tiles(inten), tiles(mag), tiles(bins)
    hist = np.zeros((GRID * GRID, ORIENT_BINS))
    rows = np.repeat(np.arange(GRID * GRID), TILE * TILE)
    np.add.at(hist, (rows, t_bin.ravel()), t_mag.ravel())
    hist /= TILE * TILE
    feats = np.concatenate([t_rgb.mean(axis=1), t_int.std(axis=1)[:, None], hist], axis=1).ravel()
    norm = np.linalg.norm(feats)
    if norm == 0:
        raise ContractError("image yields a zero feature vector (all-black input)")
    return feats / norm


def extract_many(paths: Sequence[Union[str, Path]], jobs: int = 1) -> list[FeatureVector]:
    paths = list(paths)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        vecs = list(ex.map(extract_features, paths))
    return [FeatureVector(Path(p).name, v) for p, v in zip(paths, vecs)]


# -- FSFV file format ----------------------------------------------------

MAGIC = b"FSFV"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


def save_features(features: Sequence[FeatureVector], path: Union[str, Path]) -> None:
    """Write ``FSFV`` v1: header, then per record a u32-length UTF-8 name and
    ``dim`` little-endian float32 values."""
    dims = {f.dim for f in features}
    if len(dims) > 1:
        raise ContractError(f"mixed feature dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(features), dim))
        for f in features:
            name = f.name.encode("utf-8")
            fh.write(_U32.pack(len(name)))
            fh.write(name)
            fh.write(np.asarray(f.values, dtype="<f4").tobytes())


def load_features(path: Union[str, Path]) -> list[FeatureVector]:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at offset {len(buf)}", rule="truncated", offset=len(buf))
    magic, version, count, dim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0", rule="magic", offset=0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4", rule="version", offset=4)
    pos = _HEADER.size
    out = []
    for _ in range(count):
        if pos + 4 > len(buf):
            raise FormatError(f"{path}: truncated record at offset {pos}", rule="truncated", offset=pos)
        (n,) = _U32.unpack_from(buf, pos)
        end = pos + 4 + n + 4 * dim
        if end > len(buf):
            raise FormatError(f"{path}: truncated record at offset {pos}", rule="truncated", offset=pos)
        pos += 4
        try:
            name = buf[pos : pos + n].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: invalid UTF-8 name at offset {pos}", offset=pos) from None
        values = np.frombuffer(buf, dtype="<f4", count=dim, offset=pos + n).copy()
        out.append(FeatureVector(name, values))
        pos = end
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes at offset {pos}", rule="trailing", offset=pos)
    return out


# -- pairwise similarity -------------------------------------------------

def _normalized(features: Sequence[FeatureVector | np.ndarray]) -> np.ndarray:
    if len(features) == 0:
        raise ContractError("need at least one feature vector")
    arrs = [np.asarray(getattr(f, "values", f), dtype=np.float64) for f in features]
    dims = {a.shape for a in arrs}
    if len(dims) != 1:
        raise ContractError(f"dimension mismatch among feature vectors: {sorted(dims)}")
    X = np.stack(arrs)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ContractError(f"zero feature vector at index {int(np.argmin(norms))}")
    return X / norms[:, None]


def _block_pairs(n: int, block: int) -> list[tuple[int, int]]:
    starts = range(0, n, block)
    return [(i, j) for i in starts for j in starts if j >= i]


def _iter_blocks(X: np.ndarray, jobs: int, block: int = BLOCK) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield ``(row0, col0, X[rows] @ X[cols].T)`` for the upper block triangle,
    in a fixed order; diagonal blocks have their diagonal forced to 1."""
    n = X.shape[0]
    pairs = _block_pairs(n, block)

    def work(p):
        i, j = p
        s = np.clip(X[i : i + block] @ X[j : j + block].T, -1.0, 1.0)
        if i == j:
            np.fill_diagonal(s, 1.0)
        return i, j, s

    if jobs <= 1:
        yield from map(work, pairs)
        return
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(work, pairs)


def similarity_matrix(
    features: Sequence[FeatureVector], jobs: int = 1, memory_cap: int = DEFAULT_MEMORY_CAP
) -> SimilarityMatrix:
    X = _normalized(features)
    n = X.shape[0]
    if n * n * 8 > memory_cap:
        raise MemoryError(f"{n}x{n} similarity matrix exceeds the {memory_cap}-byte cap; use streaming scores")
    S = np.empty((n, n))
    for i, j, s in _iter_blocks(X, jobs):
        S[i : i + s.shape[0], j : j + s.shape[1]] = s
        if i != j:
            S[j : j + s.shape[1], i : i + s.shape[0]] = s.T
    return SimilarityMatrix([getattr(f, "name", str(k)) for k, f in enumerate(features)], S)


def duplicate_score(matrix: SimilarityMatrix | np.ndarray, threshold: float) -> float:
    """Mean number of *other* items with similarity >= ``threshold``."""
    S = np.asarray(getattr(matrix, "entries", matrix))
    if S.size == 0:
        raise ContractError("empty similarity matrix")
    _check_threshold(threshold)
    n = S.shape[0]
    hits = int(np.count_nonzero(S >= threshold)) - int(np.count_nonzero(np.diag(S) >= threshold))
    return hits / n


def _check_threshold(t: float) -> None:
    if not 0 < t <= 1:
        raise ContractError(f"threshold {t} outside (0, 1]")


def duplicate_scores(
    features: Sequence[FeatureVector], thresholds: Sequence[float] = DEFAULT_THRESHOLDS, jobs: int = 1
) -> dict[float, float]:
    """Streaming duplicate scores: same block products as :func:`similarity_matrix`
    without materializing the n x n matrix."""
    for t in thresholds:
        _check_threshold(t)
    X = _normalized(features)
    n = X.shape[0]
    counts = dict.fromkeys(thresholds, 0)
    for i, j, s in _iter_blocks(X, jobs):
        for t in thresholds:
            c = int(np.count_nonzero(s >= t))
            if i == j:
                c -= s.shape[0]  # unit diagonal
            else:
                c *= 2
            counts[t] += c
    return {t: counts[t] / n for t in thresholds}


def score_report(
    datasets: Mapping[str, Sequence[FeatureVector]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    jobs: int = 1,
) -> ScoreReport:
    """Local (per dataset) and global (union) duplicate scores."""
    if not datasets:
        raise ContractError("no datasets given")
    per, sizes = {}, {}
    for ds in sorted(datasets):
        feats = datasets[ds]
        if len(feats) == 0:
            raise ContractError(f"dataset {ds!r} is empty")
        per[ds] = duplicate_scores(feats, thresholds, jobs)
        sizes[ds] = len(feats)
    union = [f for ds in sorted(datasets) for f in datasets[ds]]
    return ScoreReport(list(thresholds), per, duplicate_scores(union, thresholds, jobs), sizes)


def sample_diverse(
    features: Sequence[FeatureVector], threshold: float, names: Optional[Sequence[str]] = None
) -> list[int]:
    """Greedy threshold sampling in lexicographic name order.

    An item is kept iff its cosine to every previously kept item is below
    ``threshold``. Returns the kept indices into ``features`` in visiting order.
    """
    _check_threshold(threshold)
    if len(features) == 0:
        return []
    X = _normalized(features)
    if names is None:
        names = [getattr(f, "name", "") for f in features]
    order = sorted(range(len(features)), key=lambda k: (names[k], k))
    kept: list[int] = []
    K = np.empty_like(X)
    for k in order:
        m = len(kept)
        if m == 0 or np.max(K[:m] @ X[k]) < threshold:
            K[m] = X[k]
            kept.append(k)
    return kept


def report_json(report: ScoreReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=False) + "\n"
