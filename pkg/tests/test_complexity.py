import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullkit.complexity import (
    FEATURE_NAMES,
    ComplexityFeatureExtractor,
    SceneFeatures,
    block_texture_energy,
    dct_matrix,
    extract_scene_features,
    frame_features,
    plane_block_energies,
)
from hullkit.media_io import FrameBuffer

from conftest import flat_frame, random_frame


def brute_dct_energy(block):
    """O(w^4) orthonormal DCT-II, summing |AC| coefficients."""
    block = np.asarray(block, dtype=np.float64)
    w = block.shape[0]
    n = np.arange(w)
    total = 0.0
    for u in range(w):
        au = np.sqrt((1 if u == 0 else 2) / w)
        cu = np.cos(np.pi * (2 * n + 1) * u / (2 * w))
        for v in range(w):
            if u == 0 and v == 0:
                continue
            av = np.sqrt((1 if v == 0 else 2) / w)
            cv = np.cos(np.pi * (2 * n + 1) * v / (2 * w))
            coeff = 0.0
            for x in range(w):
                for y in range(w):
                    coeff += block[x, y] * cu[x] * cv[y]
            total += abs(au * av * coeff)
    return total


def padded_block_energies(plane, w, scale=1.0):
    h, wd = plane.shape
    p = np.pad(plane.astype(float) / scale, ((0, -h % w), (0, -wd % w)), mode="edge")
    return np.array([[brute_dct_energy(p[i:i + w, j:j + w]) for j in range(0, p.shape[1], w)]
                     for i in range(0, p.shape[0], w)])


def test_constant_block_zero():
    assert block_texture_energy(np.full((32, 32), 77.0)) == pytest.approx(0.0, abs=1e-9)


def test_basis_function_energy():
    c = dct_matrix(8)
    basis = np.outer(c[1], c[0]) * 5.5
    assert block_texture_energy(basis) == pytest.approx(5.5, abs=1e-9)
    assert block_texture_energy(-basis) == pytest.approx(5.5, abs=1e-9)


def test_random_block_matches_brute_force(rng):
    block = rng.integers(0, 256, (32, 32))
    expect = brute_dct_energy(block)
    assert block_texture_energy(block) == pytest.approx(expect, rel=1e-12)
    fast = plane_block_energies(block.astype(np.uint8), 32)[0, 0]
    assert fast == pytest.approx(expect, rel=1e-5)


def test_fast_plane_path_with_padding_and_10bit(rng):
    plane = rng.integers(0, 1024, (20, 24))
    got = plane_block_energies(plane.astype(np.uint16), 16, bit_depth=10)
    expect = padded_block_energies(plane, 16, scale=4.0)
    assert got.shape == (2, 2)
    np.testing.assert_allclose(got, expect, rtol=1e-5)


def test_constant_scene():
    frames = [flat_frame(128, 64, 64, index=i) for i in range(3)]
    f = extract_scene_features(frames)
    assert (f.E_Y, f.E_U, f.E_V, f.h) == (0.0, 0.0, 0.0, 0.0)
    assert (f.L_Y, f.L_U, f.L_V) == (128.0, 128.0, 128.0)
    assert f.frame_count == 3


def test_identical_frames_zero_gradient(rng):
    a = random_frame(rng, 64, 64)
    f = extract_scene_features([a, a])
    assert f.h == 0.0 and f.E_Y > 0


def test_gradient_matches_brute_force(rng):
    a, b = random_frame(rng, 64, 32), random_frame(rng, 64, 32)
    ea, eb = padded_block_energies(a.y, 32), padded_block_energies(b.y, 32)
    expect = np.abs(ea - eb).sum() / (ea.size * 32 * 32)
    f = extract_scene_features([a, b])
    assert f.h == pytest.approx(expect, rel=1e-5)
    e_expect = (ea.sum() + eb.sum()) / 2 / (ea.size * 32 * 32)
    assert f.E_Y == pytest.approx(e_expect, rel=1e-5)


def test_single_frame_has_zero_gradient(rng):
    assert extract_scene_features([random_frame(rng, 32, 32)]).h == 0.0


def test_ten_bit_matches_eight_bit_scale(rng):
    a = random_frame(rng, 64, 32)
    b = FrameBuffer(tuple(p.astype(np.uint16) * 4 for p in a.planes), 10)
    fa, fb = extract_scene_features([a]), extract_scene_features([b])
    np.testing.assert_allclose(fa.as_array(), fb.as_array(), rtol=1e-6)


def test_brightness_shift(rng):
    frames = [random_frame(rng, 64, 64, index=i) for i in range(2)]
    frames = [FrameBuffer((f.y // 2, f.u, f.v)) for f in frames]
    shifted = [FrameBuffer((f.y + 10, f.u, f.v)) for f in frames]
    a, b = extract_scene_features(frames), extract_scene_features(shifted)
    assert b.L_Y == pytest.approx(a.L_Y + 10, abs=1e-12)
    assert b.E_Y == a.E_Y
    assert b.h == a.h


def test_order_invariances(rng):
    frames = [random_frame(rng, 64, 32, index=i) for i in range(4)]
    fwd = extract_scene_features(frames)
    rev = extract_scene_features(frames[::-1])
    perm = extract_scene_features([frames[i] for i in (2, 0, 3, 1)])
    assert fwd.h == rev.h
    for name in ("E_Y", "L_Y", "E_U", "L_U", "E_V", "L_V"):
        assert getattr(fwd, name) == getattr(rev, name) == getattr(perm, name)


def test_parallel_equals_sequential(rng):
    frames = [random_frame(rng, 96, 64, index=i) for i in range(5)]
    assert extract_scene_features(frames, n_jobs=3) == extract_scene_features(frames)
    assert frame_features(frames, n_jobs=2) == frame_features(frames)


def test_per_frame_records(rng):
    rows = frame_features([random_frame(rng, 32, 32) for _ in range(2)])
    assert [r["frame"] for r in rows] == [0, 1]
    assert rows[0]["h"] == 0.0 and set(FEATURE_NAMES) <= set(rows[0])


def test_empty_scene_rejected():
    with pytest.raises(ValueError):
        extract_scene_features([])


def test_scene_features_validation_and_round_trip():
    f = SceneFeatures(1, 0.5, 100, 0.2, 120, 0.3, 130, frame_count=7)
    assert SceneFeatures.from_dict(f.to_dict()) == f
    assert f.to_dict()["frames"] == 7
    with pytest.raises(ValueError):
        SceneFeatures(-1, 0, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        SceneFeatures(float("nan"), 0, 0, 0, 0, 0, 0)


def test_extractor_estimator(rng):
    scenes = [[random_frame(rng, 32, 32)], [flat_frame(10, 32, 32)]]
    X = ComplexityFeatureExtractor().fit_transform(scenes)
    assert X.shape == (2, 7)
    assert X[1, 0] == 0.0
    assert list(ComplexityFeatureExtractor().fit().get_feature_names_out()) == list(FEATURE_NAMES)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_features_non_negative_finite(seed, n):
    rng = np.random.default_rng(seed)
    f = extract_scene_features([random_frame(rng, 48, 32, index=i) for i in range(n)])
    arr = f.as_array()
    assert np.all(np.isfinite(arr)) and np.all(arr >= 0)
