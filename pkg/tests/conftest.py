import json

import numpy as np
import pytest
from PIL import Image

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, LabeledObject, ObjectTag


def random_box(rng, width, height, min_side=2.0):
    w = rng.uniform(min_side, width / 2)
    h = rng.uniform(min_side, height / 2)
    x0 = rng.uniform(0, width - w)
    y0 = rng.uniform(0, height - h)
    return BoundingBox(x0, y0, x0 + w, y0 + h)


def random_image(rng, name="team-a_00001.png", n_max=8, width=None, height=None, with_tags=True):
    width = width or int(rng.integers(64, 2000))
    height = height or int(rng.integers(64, 1500))
    objs = []
    for _ in range(int(rng.integers(0, n_max + 1))):
        tags = frozenset(t for t in ObjectTag if with_tags and rng.random() < 0.3)
        cls = list(ConeClass)[int(rng.integers(0, 5))]
        objs.append(LabeledObject(cls, random_box(rng, width, height), None, tags))
    return AnnotatedImage(name, width, height, tuple(objs))


def supervisely_doc(width, height, objects, meta=None):
    doc = {"size": {"width": width, "height": height}, "objects": objects}
    if meta is not None:
        doc["sceneMeta"] = meta
    return json.dumps(doc)


def rect(cls, x0, y0, x1, y1, tags=()):
    return {"classTitle": cls, "geometryType": "rectangle",
            "points": {"exterior": [[x0, y0], [x1, y1]], "interior": []}, "tags": list(tags)}


def write_png(path, width, height, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture
def golden_tree(tmp_path):
    """Clean two-team tree in the documented ``<team>/{img,ann}`` layout."""
    root = tmp_path / "dataset"
    for team, numbers in (("team-a", (1, 2)), ("team-b", (7,))):
        (root / team / "img").mkdir(parents=True)
        (root / team / "ann").mkdir(parents=True)
        for k in numbers:
            name = f"{team}_{k:05d}.png"
            write_png(root / team / "img" / name, 64, 48, seed=k)
            doc = supervisely_doc(64, 48, [rect("blue_cone", 10, 10, 20, 30), rect("yellow_cone", 40, 5, 50, 25, ["truncated"])],
                                  {"onboard": True})
            (root / team / "ann" / (name + ".json")).write_text(doc)
    return root


# -- acceptance reporting ---------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


class criterion:
    """Record PASS/FAIL for an acceptance criterion; failures still raise."""

    def __init__(self, number, title):
        self.number, self.title = number, title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        previous = ACCEPTANCE_RESULTS.get(self.number, ("PASS",))[0]
        status = "FAIL" if exc_type or previous == "FAIL" else "PASS"
        ACCEPTANCE_RESULTS[self.number] = (status, self.title)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, title = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{status}] criterion {n:2d}: {title}")
