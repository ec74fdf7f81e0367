import json
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullkit.complexity import SceneFeatures
from hullkit.harness import (
    VVENC_EXAMPLE_SPEC,
    EncodeError,
    EncodeHarness,
    EncoderSpec,
    MockEncoderParams,
    RdPoint,
    ResultCache,
    Scene,
    SweepError,
    mock_bitrate,
    mock_encode,
    mock_quality,
)
from hullkit.hull import HullConfig
from hullkit.synthetic import synthetic_scene

from conftest import random_features

FEATS = SceneFeatures.from_array([2.0, 0.1, 100, 0.2, 128, 0.2, 128])


def test_closed_form_anchor():
    p = MockEncoderParams(complexity=1.0, alpha=2.0, top_bitrate=16800.0)
    assert mock_encode(FEATS, 2160, 10, p).bitrate_kbps == 16800.0
    assert mock_encode(FEATS, 1080, 10, p).bitrate_kbps == 4200.0


def test_halves_every_six_qp():
    p = MockEncoderParams()
    for r in (360, 1080, 2160):
        for q in range(10, 45):
            assert mock_encode(FEATS, r, q + 6, p).bitrate_kbps == pytest.approx(
                mock_encode(FEATS, r, q, p).bitrate_kbps / 2, rel=1e-14)


def test_crossover_with_defaults():
    p = MockEncoderParams(complexity=1.0)
    assert mock_quality(1.0, 2160, 300, p)[1] < mock_quality(1.0, 540, 300, p)[1]
    assert mock_quality(1.0, 2160, 16800, p)[1] > mock_quality(1.0, 540, 16800, p)[1]


def test_deterministic():
    assert mock_encode(FEATS, 720, 30) == mock_encode(FEATS, 720, 30)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), r=st.sampled_from([360, 540, 720, 1080, 1440, 2160]),
       q=st.integers(10, 49))
def test_mock_monotonicity(seed, r, q):
    f = random_features(np.random.default_rng(seed))
    a, b = mock_encode(f, r, q), mock_encode(f, r, q + 1)
    assert b.bitrate_kbps < a.bitrate_kbps
    assert b.xpsnr_db < a.xpsnr_db and b.psnr_db < a.psnr_db
    if r < 2160:
        up = {360: 540, 540: 720, 720: 1080, 1080: 1440, 1440: 2160}[r]
        assert mock_encode(f, up, q).bitrate_kbps > a.bitrate_kbps


def test_ceilings_rise_with_resolution():
    p = MockEncoderParams()
    tops = [mock_quality(1.0, r, 1e9, p)[1] for r in (360, 720, 1080, 2160)]
    assert tops == sorted(tops) and len(set(tops)) == 4


def test_maxrate_caps_bitrate():
    free = mock_encode(FEATS, 2160, 10)
    capped = mock_encode(FEATS, 2160, 10, maxrate=1000)
    assert capped.bitrate_kbps == 1000 < free.bitrate_kbps
    assert capped.xpsnr_db < free.xpsnr_db
    assert mock_encode(FEATS, 360, 50, maxrate=10**6) == mock_encode(FEATS, 360, 50)


def test_times_scale_with_pixels():
    p = MockEncoderParams(time_offset=0.0)
    a, b = mock_encode(FEATS, 1080, 30, p), mock_encode(FEATS, 2160, 30, p)
    assert b.enc_time_s == pytest.approx(4 * a.enc_time_s)
    assert b.dec_time_s == pytest.approx(4 * a.dec_time_s)
    assert mock_encode(FEATS, 1080, 20, p).enc_time_s > a.enc_time_s


def test_fixed_time_per_encode():
    p = MockEncoderParams()
    t = mock_encode(FEATS, 360, 50, p)
    rate_term = 1 + p.time_qp_gain * 2 ** (-40 / 6)
    assert t.enc_time_s == pytest.approx(p.enc_seconds * ((1 / 6) ** 2 * rate_term + p.time_offset))


def test_params_validation():
    with pytest.raises(ValueError, match="unknown"):
        MockEncoderParams.from_dict({"gamma": 1.0, "bogus": 2})
    assert MockEncoderParams.from_dict({"gamma": 1.0}).gamma == 1.0
    assert MockEncoderParams().digest != MockEncoderParams(gamma=0.9).digest


def test_rdpoint_checks():
    with pytest.raises(ValueError):
        RdPoint("s", 720, 30, 0.0, 30, 30)
    with pytest.raises(ValueError):
        RdPoint("s", 720, 30, 10.0, 30, 30, -1.0)
    p = RdPoint("s", 720, 30, 10.0, 30, 31, 1.0, 0.5)
    assert RdPoint.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_sweep_counts_and_order():
    h = EncodeHarness()
    scene = Scene("a", features=FEATS)
    pts = h.exhaustive_sweep(scene, HullConfig())
    assert len(pts) == 246
    assert [(p.resolution, p.qp) for p in pts] == HullConfig().cells()
    assert len(h.exhaustive_sweep(scene, HullConfig(r_max=720))) == 123
    par = EncodeHarness(jobs=4).exhaustive_sweep(scene, HullConfig())
    assert par == pts


def test_cache_round_trip(tmp_path):
    scene = Scene("a", features=FEATS)
    h = EncodeHarness(cache_dir=tmp_path)
    p = h.encode_point(scene, 720, 30)
    key = h.scene_key(scene)
    assert (tmp_path / key / "720_30.json").exists()
    fresh = EncodeHarness(cache_dir=tmp_path)
    assert fresh.cache.get(key, 720, 30) == p == mock_encode(FEATS, 720, 30, scene_id="a")
    assert fresh.encode_point(scene, 720, 30) == p
    h.encode_point(scene, 720, 30, maxrate=300)
    assert (tmp_path / key / "720_30_m300.json").exists()


def test_cache_key_depends_on_content_and_config():
    a, b = Scene("a", features=FEATS), Scene("b", features=FEATS)
    assert EncodeHarness().scene_key(a) == EncodeHarness().scene_key(b)
    other = Scene("c", features=SceneFeatures.from_array([3.0, 0.1, 100, 0.2, 128, 0.2, 128]))
    assert EncodeHarness().scene_key(a) != EncodeHarness().scene_key(other)
    assert EncodeHarness().scene_key(a) != EncodeHarness(mock_params=MockEncoderParams(gamma=1)).scene_key(a)


def test_corrupt_cache_entry_recomputed(tmp_path, caplog):
    scene = Scene("a", features=FEATS)
    h = EncodeHarness(cache_dir=tmp_path)
    path = h.cache.path(h.scene_key(scene), 720, 30)
    path.parent.mkdir(parents=True)
    path.write_text("{not json")
    p = EncodeHarness(cache_dir=tmp_path).encode_point(scene, 720, 30)
    assert p == mock_encode(FEATS, 720, 30, scene_id="a")
    assert "corrupt" in caplog.text
    assert json.loads(path.read_text())["qp"] == 30


def test_resume_after_interruption(tmp_path, monkeypatch):
    scene = Scene("a", features=FEATS)
    config = HullConfig(r_max=720)
    full = EncodeHarness().exhaustive_sweep(scene, config)
    import hullkit.harness as harness
    real = harness.mock_encode
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 50:
            raise RuntimeError("killed")
        return real(*a, **k)

    monkeypatch.setattr(harness, "mock_encode", flaky)
    with pytest.raises(SweepError) as err:
        EncodeHarness(cache_dir=tmp_path).exhaustive_sweep(scene, config)
    assert len(err.value.points) == 50 and len(err.value.failures) == 73
    monkeypatch.setattr(harness, "mock_encode", real)
    assert EncodeHarness(cache_dir=tmp_path).exhaustive_sweep(scene, config) == full
    assert len(list(tmp_path.rglob("*.json"))) == 123


def test_cache_without_root():
    c = ResultCache()
    assert c.path("k", 1, 2) is None and c.get("k", 1, 2) is None
    p = RdPoint("s", 720, 30, 10.0, 30, 31)
    c.put("k", 720, 30, p)
    assert c.get("k", 720, 30) == p


def test_encoder_spec_validation():
    with pytest.raises(ValueError, match="placeholders"):
        EncoderSpec("enc {input} {output}", "dec {input} {output}")
    with pytest.raises(ValueError, match="decode"):
        EncoderSpec("enc {input} {output} {qp}", "dec {input}")
    spec = EncoderSpec.from_dict(VVENC_EXAMPLE_SPEC)
    assert "{maxrate}" in spec.encode_cmd
    assert EncoderSpec.from_dict(spec.to_dict()) == spec


FAKE_ENCODER = textwrap.dedent("""
    import sys
    import numpy as np
    src, dst, qp = sys.argv[1], sys.argv[2], int(sys.argv[3])
    data = np.fromfile(src, dtype=np.uint8)
    shift = qp // 10
    np.save(dst, (data >> shift) << shift, allow_pickle=False)
    import os
    os.replace(dst + ".npy", dst)
    print("bits", qp)
""")
FAKE_DECODER = textwrap.dedent("""
    import sys
    import numpy as np
    data = np.load(sys.argv[1])
    if len(sys.argv) > 3:
        data = data[: len(data) // 2]
    data.tofile(sys.argv[2])
""")


@pytest.fixture
def fake_tools(tmp_path):
    enc, dec = tmp_path / "enc.py", tmp_path / "dec.py"
    enc.write_text(FAKE_ENCODER)
    dec.write_text(FAKE_DECODER)
    py = sys.executable
    return EncoderSpec(f"{py} {enc} {{input}} {{output}} {{qp}}", f"{py} {dec} {{input}} {{output}}",
                       threads=1)


def test_external_mode(fake_tools, tmp_path):
    frames = synthetic_scene(3, width=64, height=48, n_frames=2)
    scene = Scene.from_frames("ext", frames)
    h = EncodeHarness(spec=fake_tools, cache_dir=tmp_path / "cache")
    p_fine = h.encode_point(scene, 48, 10)
    p_coarse = h.encode_point(scene, 48, 40)
    assert p_fine.xpsnr_db > p_coarse.xpsnr_db
    assert p_fine.enc_time_s > 0 and p_fine.dec_time_s > 0
    # bitrate from file size over duration: 2 frames at 30 fps
    size = 64 * 48 * 3 // 2 * 2
    assert p_fine.bitrate_kbps == pytest.approx((size + 128) * 8 / 1000 / (2 / 30), rel=0.05)
    down = h.encode_point(scene, 24, 10)
    assert down.resolution == 24 and down.xpsnr_db < 100
    lossless = EncodeHarness(spec=fake_tools).encode_point(scene, 48, 9)
    assert lossless.xpsnr_db == 100.0 and lossless.psnr_db == 100.0


def test_external_bitrate_pattern(fake_tools):
    spec = EncoderSpec(fake_tools.encode_cmd, fake_tools.decode_cmd, bitrate_pattern=r"bits (\d+)")
    scene = Scene.from_frames("ext", synthetic_scene(3, width=32, height=16, n_frames=1))
    assert EncodeHarness(spec=spec).encode_point(scene, 16, 20).bitrate_kbps == 20.0
    bad = EncoderSpec(fake_tools.encode_cmd, fake_tools.decode_cmd, bitrate_pattern=r"kbps (\d+)")
    with pytest.raises(EncodeError, match="pattern"):
        EncodeHarness(spec=bad).encode_point(scene, 16, 20)


def test_external_failures(fake_tools, tmp_path):
    scene = Scene.from_frames("ext", synthetic_scene(3, width=32, height=16, n_frames=2))
    py = sys.executable
    failing = EncoderSpec(f"{py} -c 'import sys; sys.stderr.write(\"boom\"); sys.exit(3)' "
                          "{input} {output} {qp}", fake_tools.decode_cmd)
    with pytest.raises(EncodeError, match="status 3: boom"):
        EncodeHarness(spec=failing).encode_point(scene, 16, 20)
    missing = EncoderSpec("/nonexistent/encoder {input} {output} {qp}", fake_tools.decode_cmd)
    with pytest.raises(EncodeError, match="could not start"):
        EncodeHarness(spec=missing).encode_point(scene, 16, 20)
    short = EncoderSpec(fake_tools.encode_cmd, fake_tools.decode_cmd + " half")
    with pytest.raises(EncodeError, match="frames"):
        EncodeHarness(spec=short).encode_point(scene, 16, 20)
    unknown = EncoderSpec(fake_tools.encode_cmd + " {nope}", fake_tools.decode_cmd)
    with pytest.raises(EncodeError, match="placeholder"):
        EncodeHarness(spec=unknown).encode_point(scene, 16, 20)
    config = HullConfig(resolutions=(16,), bitrates=(100,), r_max=16, q_min=10, q_max=12)
    with pytest.raises(SweepError) as err:
        EncodeHarness(spec=failing, jobs=2).exhaustive_sweep(scene, config)
    assert len(err.value.failures) == 3


def test_scene_hash_is_content_based(tmp_path):
    frames = synthetic_scene(1, width=32, height=16, n_frames=2)
    from hullkit.media_io import write_sequence
    write_sequence(frames, tmp_path / "a.y4m")
    write_sequence(frames, tmp_path / "b.y4m")
    a = Scene("a", str(tmp_path / "a.y4m"))
    b = Scene("b", str(tmp_path / "b.y4m"))
    assert a.content_hash() == b.content_hash() == Scene.from_frames("x", frames).content_hash()
    assert a.get_features() == b.get_features()
    with pytest.raises(ValueError):
        Scene("none").frames()
