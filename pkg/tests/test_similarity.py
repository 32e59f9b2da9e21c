import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conetools.core import ContractError
from conetools.similarity import (
    FEATURE_DIM,
    FeatureVector,
    FormatError,
    cosine,
    duplicate_score,
    duplicate_scores,
    extract_features,
    load_features,
    sample_diverse,
    save_features,
    score_report,
    similarity_matrix,
)


def vecs(rng, n, d=64, prefix="v"):
    return [FeatureVector(f"{prefix}_{k:05d}.png", rng.standard_normal(d)) for k in range(n)]


def basis(n, d=None, prefix="e"):
    d = d or n
    return [FeatureVector(f"{prefix}_{k:05d}.png", np.eye(d)[k]) for k in range(n)]


def brute_matrix(features):
    n = len(features)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            x, y = features[i].values, features[j].values
            out[i, j] = float(np.dot(x, y)) / (math.sqrt(float(np.dot(x, x))) * math.sqrt(float(np.dot(y, y))))
    return out


def brute_score(S, t):
    n = S.shape[0]
    return sum(1 for i in range(n) for j in range(n) if i != j and S[i, j] >= t) / n


# -- cosine ----------------------------------------------------------------

def test_cosine_examples():
    v = np.array([3.0, -1.0, 2.0, 0.5])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-15)
    e = np.eye(5)
    assert cosine(e[0], e[3]) == 0.0
    assert cosine(np.array([1.0, 1, 0, 0]), np.array([1.0, 0, 0, 0])) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_cosine_errors():
    with pytest.raises(ContractError):
        cosine(np.ones(3), np.ones(4))
    with pytest.raises(ContractError):
        cosine(np.zeros(3), np.ones(3))


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_cosine_scale_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(16), rng.standard_normal(16)
    assert abs(cosine(a * x, b * y) - cosine(x, y)) <= 1e-9


def test_feature_vector_rejects_zero_and_nan():
    with pytest.raises(ContractError):
        FeatureVector("a", np.zeros(4))
    with pytest.raises(ContractError):
        FeatureVector("a", np.array([1.0, np.nan]))


# -- extractor -------------------------------------------------------------

def _asymmetric_image():
    img = np.zeros((96, 160, 3), dtype=np.uint8)
    img[:, :, 2] = 40
    img[10:40, 20:70] = (255, 200, 0)
    img[50:90, 100:110] = (0, 0, 255)
    img[:, 140:] = (200, 200, 200)
    yy, xx = np.mgrid[0:96, 0:160]
    img[..., 1] = np.where(xx + 2 * yy < 80, 250, img[..., 1])
    return img


def test_uniform_gray():
    f = extract_features(np.full((50, 70, 3), 128, dtype=np.uint8))
    assert f.shape == (FEATURE_DIM,)
    per_tile = f.reshape(256, 16)
    assert np.all(per_tile[:, 3:] == 0)
    assert np.allclose(per_tile[:, :3], 1 / math.sqrt(768), atol=1e-12)
    assert np.linalg.norm(f) == pytest.approx(1.0)


def test_extractor_deterministic_and_rotation_sensitive(tmp_path):
    from PIL import Image

    img = _asymmetric_image()
    a = extract_features(img)
    b = extract_features(img.copy())
    assert np.array_equal(a, b)
    assert cosine(a, b) == pytest.approx(1.0, abs=1e-12)
    rotated = extract_features(np.rot90(img).copy())
    assert cosine(a, rotated) < 1.0
    path = tmp_path / "x_00001.png"
    Image.fromarray(img).save(path)
    assert np.array_equal(extract_features(path), a)


def test_extractor_bad_input(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image")
    with pytest.raises(ContractError):
        extract_features(p)
    with pytest.raises(ContractError):
        extract_features(np.zeros((20, 20, 3), dtype=np.uint8))


# -- FSFV -------------------------------------------------------------------

def test_fsfv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    feats = [FeatureVector(n, rng.standard_normal(FEATURE_DIM).astype(np.float32)) for n in ("a.png", "b.png", "ü.png")]
    path = tmp_path / "f.fsfv"
    save_features(feats, path)
    back = load_features(path)
    assert [f.name for f in back] == ["a.png", "b.png", "ü.png"]
    for x, y in zip(feats, back):
        assert x.values.tobytes() == y.values.astype("<f4").tobytes()


def test_fsfv_empty(tmp_path):
    path = tmp_path / "e.fsfv"
    save_features([], path)
    assert path.read_bytes() == b"FSFV" + struct.pack("<III", 1, 0, 0)
    assert load_features(path) == []


def test_fsfv_layout(tmp_path):
    path = tmp_path / "one.fsfv"
    save_features([FeatureVector("ab", np.array([1.0, -2.0], dtype=np.float32))], path)
    assert path.read_bytes() == b"FSFV" + struct.pack("<IIII", 1, 1, 2, 2) + b"ab" + struct.pack("<ff", 1.0, -2.0)


@pytest.mark.parametrize(
    "mutate, rule, offset",
    [
        (lambda b: b"XXXX" + b[4:], "magic", 0),
        (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "version", 4),
        (lambda b: b[:-3], "truncated", 16),
        (lambda b: b[:10], "truncated", 10),
    ],
)
def test_fsfv_errors(tmp_path, mutate, rule, offset):
    path = tmp_path / "f.fsfv"
    save_features(vecs(np.random.default_rng(0), 1, 8), path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert err.value.rule == rule
    assert err.value.offset == offset


# -- matrix and scores -----------------------------------------------------

def test_matrix_small_cases():
    one = similarity_matrix(vecs(np.random.default_rng(0), 1))
    assert one.entries.tolist() == [[1.0]]
    assert np.array_equal(similarity_matrix(basis(6)).entries, np.eye(6))


def test_matrix_matches_scalar_oracle():
    feats = vecs(np.random.default_rng(3), 20, 300)
    S = similarity_matrix(feats).entries
    assert np.max(np.abs(S - brute_matrix(feats))) <= 1e-6
    assert np.array_equal(S, S.T)
    assert np.all(np.diag(S) == 1.0)


def test_matrix_blocks_and_parallelism_bit_identical():
    feats = vecs(np.random.default_rng(4), 600, 32)
    ref = similarity_matrix(feats, jobs=1).entries
    for jobs in (2, 4, 16):
        assert similarity_matrix(feats, jobs=jobs).entries.tobytes() == ref.tobytes()
    assert np.array_equal(ref, ref.T)


def test_memory_guard_falls_back_to_streaming():
    feats = vecs(np.random.default_rng(5), 50, 8)
    with pytest.raises(MemoryError):
        similarity_matrix(feats, memory_cap=1000)
    S = similarity_matrix(feats).entries
    assert duplicate_scores(feats, [0.5]) == {0.5: duplicate_score(S, 0.5)}


def test_duplicate_score_examples():
    assert duplicate_score(similarity_matrix(basis(5)), 0.99) == 0.0
    same = [FeatureVector(f"s{k}", np.array([1.0, 2.0, 3.0])) for k in range(7)]
    assert duplicate_score(similarity_matrix(same), 0.99) == 6.0
    S = np.array([[1.0, 0.995, 0.5], [0.995, 1.0, 0.5], [0.5, 0.5, 1.0]])
    assert duplicate_score(S, 0.99) == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(ContractError):
        duplicate_score(np.empty((0, 0)), 0.99)
    with pytest.raises(ContractError):
        duplicate_score(S, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duplicate_score_monotone(seed):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((5, 16))
    feats = [FeatureVector(str(k), base[k % 5] + 0.2 * rng.standard_normal(16)) for k in range(30)]
    S = similarity_matrix(feats)
    ts = sorted(rng.uniform(0.01, 1.0, 6))
    scores = [duplicate_score(S, t) for t in ts]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    for t, s in zip(ts, scores):
        assert s == brute_score(S.entries, t)


def test_score_report_single_dataset():
    feats = vecs(np.random.default_rng(6), 10, 8)
    rep = score_report({"team-a": feats})
    assert rep.per_dataset["team-a"] == rep.global_


def test_score_report_cross_dataset_duplicates():
    # each dataset is orthogonal inside; dataset b repeats a's directions
    a = basis(4, 8, "a")
    b = [FeatureVector(f"b_{k:05d}.png", np.eye(8)[k] * 3.0) for k in range(4)]
    rep = score_report({"a": a, "b": b}, [0.99])
    assert rep.per_dataset == {"a": {0.99: 0.0}, "b": {0.99: 0.0}}
    # every image has exactly one duplicate in the union
    assert rep.global_ == {0.99: 1.0}
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "scope,dataset_id,threshold,score,n_images"
    assert "global,*,0.99,1.0,8" in csv_text


def test_score_report_parallel_identical():
    rng = np.random.default_rng(7)
    sets = {"x": vecs(rng, 300, 16), "y": vecs(rng, 50, 16)}
    ref = score_report(sets, jobs=1).to_json()
    assert score_report(sets, jobs=4).to_json() == ref


# -- sampler ---------------------------------------------------------------

def test_sampler_examples():
    assert sorted(sample_diverse(basis(7), 0.5)) == list(range(7))
    same = [FeatureVector(n, np.array([1.0, 1.0])) for n in ("c.png", "a.png", "b.png")]
    assert sample_diverse(same, 0.99) == [1]


def _check_sampler(feats, t, kept):
    S = brute_matrix(feats)
    kept_set = set(kept)
    for i in kept:
        for j in kept:
            if i != j:
                assert S[i, j] < t
    for r in set(range(len(feats))) - kept_set:
        assert any(S[r, k] >= t for k in kept)


def test_sampler_random_n50():
    rng = np.random.default_rng(8)
    base = rng.standard_normal((10, 32))
    feats = [FeatureVector(f"i{k:03d}", base[k % 10] + 0.3 * rng.standard_normal(32)) for k in range(50)]
    kept = sample_diverse(feats, 0.9)
    assert 1 <= len(kept) < 50
    _check_sampler(feats, 0.9, kept)
    assert kept == sample_diverse(feats, 0.9)
