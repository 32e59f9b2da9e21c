import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conetools.core import AnnotatedImage, BoundingBox, ConeClass, ContractError, LabeledObject, ObjectTag
from conetools.stats import StatsConfig, area_bucket, area_bucket_labels, compute_stats

from conftest import random_image


def cone(cls, box=(0, 0, 10, 10), tags=()):
    return LabeledObject(cls, BoundingBox(*box), None, frozenset(tags))


def test_single_image_counts():
    img = AnnotatedImage("a", 100, 100, tuple([cone(ConeClass.BLUE)] * 3 + [cone(ConeClass.YELLOW)] * 2))
    rep = compute_stats([img])
    assert rep.distinct_classes_hist == {0: 0, 1: 0, 2: 1, 3: 0, 4: 0}
    assert rep.class_combination_counts == {"blue+yellow": 1}
    assert rep.cones_per_image == 5.0
    assert rep.objects_per_image_hist["5-9"] == 1


def test_full_frame_box_in_top_bucket():
    rep = compute_stats([AnnotatedImage("a", 64, 48, (cone(ConeClass.BLUE, (0, 0, 64, 48)),))])
    labels = area_bucket_labels()
    assert rep.relative_box_area_hist[labels[-1]] == 1
    assert area_bucket(1.0) == len(labels) - 1
    assert area_bucket(1e-7) == 0


def test_other_excluded_by_default():
    img = AnnotatedImage("a", 10, 10, (cone(ConeClass.OTHER), cone(ConeClass.BLUE)))
    assert compute_stats([img]).n_cones == 1
    rep = compute_stats([img], StatsConfig(include_other=True))
    assert rep.n_cones == 2
    assert rep.distinct_classes_hist == compute_stats([img]).distinct_classes_hist


def test_tail_folds_into_other():
    imgs = [AnnotatedImage(f"b{k}", 10, 10, (cone(ConeClass.BLUE),)) for k in range(199)]
    imgs.append(AnnotatedImage("y", 10, 10, (cone(ConeClass.YELLOW),)))
    rep = compute_stats(imgs)
    assert rep.class_combination_counts == {"blue": 199, "other": 1}


def test_tag_counts():
    img = AnnotatedImage("a", 10, 10, (cone(ConeClass.BLUE, tags=[ObjectTag.TRUNCATED, ObjectTag.KNOCKED_OVER]),
                                       cone(ConeClass.BLUE, tags=[ObjectTag.TRUNCATED])))
    assert compute_stats([img]).tag_counts == {"knocked_over": 1, "truncated": 2, "tape_removed_or_sticker": 0}


def test_empty_dataset():
    with pytest.raises(ContractError):
        compute_stats([])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_conservation_and_merge(seed):
    rng = np.random.default_rng(seed)
    a = [random_image(rng, name=f"a{k}", n_max=int(rng.integers(0, 130))) for k in range(int(rng.integers(1, 12)))]
    b = [random_image(rng, name=f"b{k}") for k in range(int(rng.integers(1, 12)))]
    ra, rb, rab = compute_stats(a), compute_stats(b), compute_stats(a + b)
    for r, data in ((ra, a), (rb, b), (rab, a + b)):
        assert sum(r.distinct_classes_hist.values()) == r.n_images == len(data)
        assert sum(r.objects_per_image_hist.values()) == r.n_images
        assert sum(r.class_combination_counts.values()) == r.n_images
        assert sum(r.relative_box_area_hist.values()) == r.n_cones
        assert abs(r.cones_per_image * r.n_images - r.n_cones) < 1e-9
    assert rab.n_images == ra.n_images + rb.n_images
    assert rab.n_cones == ra.n_cones + rb.n_cones
    assert rab.cones_per_image == pytest.approx(
        (ra.cones_per_image * ra.n_images + rb.cones_per_image * rb.n_images) / rab.n_images)


def test_csv_tables():
    rep = compute_stats([AnnotatedImage("a", 10, 10, (cone(ConeClass.BLUE),))])
    lines = rep.histogram_csv().splitlines()
    assert lines[0] == "table,bucket,count"
    assert "class_combinations,blue,1" in lines
