from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullkit.media_io import (
    FrameBuffer,
    Geometry,
    MediaFormatError,
    open_sequence,
    parse_fps,
    read_frame,
    read_sequence,
    write_sequence,
)

from conftest import random_frame


def test_raw_1080p_frame_count(tmp_path):
    path = tmp_path / "a.yuv"
    path.write_bytes(bytes(3_110_400))
    h = open_sequence(path, Geometry(1920, 1080))
    assert h.frame_count == 1
    f = read_frame(h, 0)
    assert not f.y.any() and not f.u.any() and not f.v.any()


def test_raw_10bit_frame_count(tmp_path):
    path = tmp_path / "a.yuv"
    path.write_bytes(bytes(12_288))
    assert len(open_sequence(path, Geometry(64, 64, 10))) == 1


def test_y4m_header_geometry(tmp_path):
    path = tmp_path / "a.y4m"
    path.write_bytes(b"YUV4MPEG2 W3840 H2160 F60:1 Ip A1:1 C420mpeg2\n")
    h = open_sequence(path)
    assert (h.width, h.height, h.frame_rate, h.frame_count) == (3840, 2160, Fraction(60), 0)


def test_y4m_header_wins_over_override(tmp_path, rng):
    path = write_sequence([random_frame(rng, 32, 16)], tmp_path / "a.y4m")
    h = open_sequence(path, Geometry(64, 64, 10, 50))
    assert (h.width, h.height, h.bit_depth) == (32, 16, 8)


@pytest.mark.parametrize("bad", [b"C422", b"C444", b"Cmono"])
def test_y4m_rejects_other_chroma(tmp_path, bad):
    path = tmp_path / "a.y4m"
    path.write_bytes(b"YUV4MPEG2 W16 H16 F30:1 " + bad + b"\n")
    with pytest.raises(MediaFormatError, match="4:2:0"):
        open_sequence(path)


def test_y4m_odd_size_rejected(tmp_path):
    path = tmp_path / "a.y4m"
    path.write_bytes(b"YUV4MPEG2 W15 H16 F30:1 C420\n")
    with pytest.raises(MediaFormatError):
        open_sequence(path)


def test_truncated_raw(tmp_path):
    path = tmp_path / "a.yuv"
    path.write_bytes(bytes(100))
    with pytest.raises(MediaFormatError, match="multiple"):
        open_sequence(path, Geometry(16, 16))


def test_truncated_y4m(tmp_path, rng):
    path = write_sequence([random_frame(rng, 16, 16)] * 2, tmp_path / "a.y4m")
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(MediaFormatError, match="truncated"):
        open_sequence(path)


def test_raw_needs_geometry(tmp_path):
    path = tmp_path / "a.yuv"
    path.write_bytes(bytes(384))
    with pytest.raises(MediaFormatError):
        open_sequence(path)


def test_index_out_of_range(tmp_path, rng):
    h = open_sequence(write_sequence([random_frame(rng, 16, 16)], tmp_path / "a.y4m"))
    with pytest.raises(IndexError):
        read_frame(h, 1)


def test_repeated_reads_identical(tmp_path, rng):
    h = open_sequence(write_sequence([random_frame(rng, 16, 8)] * 3, tmp_path / "a.y4m"))
    assert read_frame(h, 2).equals(read_frame(h, 2))


@pytest.mark.parametrize("fmt", ["yuv", "y4m"])
@pytest.mark.parametrize("depth", [8, 10])
def test_round_trip(tmp_path, rng, fmt, depth):
    frames = [random_frame(rng, 48, 32, depth, i) for i in range(3)]
    path = write_sequence(frames, tmp_path / f"a.{fmt}")
    back = read_sequence(path, Geometry(48, 32, depth))
    assert len(back) == 3
    assert all(a.equals(b) for a, b in zip(frames, back))
    if depth == 10:
        assert max(int(f.y.max()) for f in back) > 255


def test_empty_y4m_has_header(tmp_path):
    path = write_sequence([], tmp_path / "e.y4m", geometry=Geometry(16, 16))
    assert path.read_bytes().startswith(b"YUV4MPEG2 W16 H16")
    assert len(open_sequence(path)) == 0
    with pytest.raises(ValueError):
        write_sequence([], tmp_path / "f.y4m")


def test_write_error_has_path(tmp_path, rng):
    target = tmp_path / "missing" / "a.yuv"
    with pytest.raises(OSError, match="missing"):
        write_sequence([random_frame(rng, 16, 16)], target)


def test_mixed_geometry_rejected(tmp_path, rng):
    with pytest.raises(ValueError):
        write_sequence([random_frame(rng, 16, 16), random_frame(rng, 32, 16)], tmp_path / "a.yuv")


def test_frame_invariants():
    with pytest.raises(ValueError):
        FrameBuffer((np.zeros((16, 16)), np.zeros((8, 8)), np.zeros((8, 7))))
    with pytest.raises(ValueError):
        FrameBuffer((np.full((16, 16), 256), np.zeros((8, 8)), np.zeros((8, 8))))
    with pytest.raises(ValueError):
        FrameBuffer((np.zeros((15, 16)), np.zeros((7, 8)), np.zeros((7, 8))))
    f = FrameBuffer((np.full((16, 16), 1023), np.zeros((8, 8)), np.zeros((8, 8))), 10)
    assert f.y.dtype == np.uint16


def test_parse_fps():
    assert parse_fps("30000/1001") == Fraction(30000, 1001)
    assert parse_fps("60:1") == 60
    with pytest.raises(ValueError):
        parse_fps("0")


@settings(max_examples=25, deadline=None)
@given(w=st.integers(1, 12), h=st.integers(1, 12), depth=st.sampled_from([8, 10]),
       n=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, w, h, depth, n, seed):
    rng = np.random.default_rng(seed)
    frames = [random_frame(rng, 2 * w, 2 * h, depth, i) for i in range(n)]
    path = write_sequence(frames, tmp_path_factory.mktemp("rt") / "a.y4m")
    assert all(a.equals(b) for a, b in zip(frames, read_sequence(path)))
