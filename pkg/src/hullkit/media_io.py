"""Planar 4:2:0 raw video and Y4M reading/writing.

Raw ``.yuv`` files carry no header, so their geometry comes from a
:class:`Geometry` override. Y4M headers always win over overrides.
10-bit samples are stored little-endian, two bytes per sample, LSB-aligned.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .utils.validation import check_bit_depth, check_geometry, check_plane, sample_dtype

Y4M_MAGIC = b"YUV4MPEG2"
# 4:2:0 colorspace tags; the siting variants differ only in chroma placement.
_Y4M_420_TAGS = {
    "420": 8,
    "420jpeg": 8,
    "420mpeg2": 8,
    "420paldv": 8,
    "420p10": 10,
}


class MediaFormatError(ValueError):
    """Raised for malformed, truncated or unsupported video files."""


def parse_fps(text) -> Fraction:
    """Parse ``"60"``, ``"30000/1001"`` or ``"60:1"`` into a Fraction."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    if isinstance(text, float):
        return Fraction(text).limit_denominator(1001)
    s = str(text).strip().replace(":", "/")
    try:
        fps = Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"invalid frame rate {text!r}") from exc
    if fps <= 0:
        raise ValueError(f"frame rate must be positive, got {text!r}")
    return fps


@dataclass(frozen=True)
class Geometry:
    width: int
    height: int
    bit_depth: int = 8
    frame_rate: Fraction = Fraction(30)

    def __post_init__(self):
        check_geometry(self.width, self.height)
        check_bit_depth(self.bit_depth)
        object.__setattr__(self, "frame_rate", parse_fps(self.frame_rate))

    @property
    def bytes_per_sample(self) -> int:
        return 1 if self.bit_depth == 8 else 2

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * 3 // 2 * self.bytes_per_sample


@dataclass
class FrameBuffer:
    """One decoded 4:2:0 picture: Y at W x H, U and V at W/2 x H/2."""

    planes: tuple
    bit_depth: int = 8
    frame_index: int = 0
    frame_rate: Fraction = Fraction(30)

    def __post_init__(self):
        check_bit_depth(self.bit_depth)
        if len(self.planes) != 3:
            raise ValueError("a frame needs exactly three planes (Y, U, V)")
        y = np.asarray(self.planes[0])
        if y.ndim != 2:
            raise ValueError("luma plane must be 2-D")
        h, w = y.shape
        check_geometry(w, h)
        cshape = (h // 2, w // 2)
        self.planes = (
            check_plane(y, (h, w), self.bit_depth, "Y"),
            check_plane(self.planes[1], cshape, self.bit_depth, "U"),
            check_plane(self.planes[2], cshape, self.bit_depth, "V"),
        )
        self.frame_rate = parse_fps(self.frame_rate)

    @property
    def y(self) -> np.ndarray:
        return self.planes[0]

    @property
    def u(self) -> np.ndarray:
        return self.planes[1]

    @property
    def v(self) -> np.ndarray:
        return self.planes[2]

    @property
    def width(self) -> int:
        return self.planes[0].shape[1]

    @property
    def height(self) -> int:
        return self.planes[0].shape[0]

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.width, self.height, self.bit_depth, self.frame_rate)

    def to_bytes(self) -> bytes:
        dtype = "<u2" if self.bit_depth == 10 else "u1"
        return b"".join(p.astype(dtype, copy=False).tobytes() for p in self.planes)

    @classmethod
    def from_bytes(cls, data, geometry: Geometry, frame_index=0) -> "FrameBuffer":
        g = geometry
        dtype = np.dtype("<u2") if g.bit_depth == 10 else np.dtype("u1")
        flat = np.frombuffer(data, dtype=dtype, count=g.frame_bytes // dtype.itemsize)
        ny = g.width * g.height
        nc = ny // 4
        planes = (
            flat[:ny].reshape(g.height, g.width),
            flat[ny:ny + nc].reshape(g.height // 2, g.width // 2),
            flat[ny + nc:ny + 2 * nc].reshape(g.height // 2, g.width // 2),
        )
        return cls(tuple(p.astype(sample_dtype(g.bit_depth)) for p in planes),
                   g.bit_depth, frame_index, g.frame_rate)

    def equals(self, other: "FrameBuffer") -> bool:
        return (self.bit_depth == other.bit_depth
                and all(np.array_equal(a, b) for a, b in zip(self.planes, other.planes)))


@dataclass(frozen=True)
class SequenceHandle:
    path: Path
    geometry: Geometry
    frame_count: int
    container: str
    offsets: tuple = field(default=(), repr=False)

    @property
    def width(self) -> int:
        return self.geometry.width

    @property
    def height(self) -> int:
        return self.geometry.height

    @property
    def bit_depth(self) -> int:
        return self.geometry.bit_depth

    @property
    def frame_rate(self) -> Fraction:
        return self.geometry.frame_rate

    def __len__(self):
        return self.frame_count

    def __iter__(self) -> Iterator[FrameBuffer]:
        return iter_frames(self)


def _parse_y4m_header(line: bytes) -> Geometry:
    tokens = line.decode("ascii", errors="replace").split()
    if not tokens or tokens[0] != Y4M_MAGIC.decode():
        raise MediaFormatError("missing YUV4MPEG2 signature")
    width = height = None
    fps = Fraction(25)
    colorspace = "420jpeg"
    for tok in tokens[1:]:
        key, val = tok[0], tok[1:]
        if key == "W":
            width = int(val)
        elif key == "H":
            height = int(val)
        elif key == "F":
            fps = parse_fps(val)
        elif key == "C":
            colorspace = val
    if width is None or height is None:
        raise MediaFormatError("Y4M header lacks W or H")
    if colorspace not in _Y4M_420_TAGS:
        raise MediaFormatError(f"unsupported Y4M colorspace C{colorspace}; only 4:2:0 is supported")
    try:
        return Geometry(width, height, _Y4M_420_TAGS[colorspace], fps)
    except ValueError as exc:
        raise MediaFormatError(str(exc)) from exc


def _scan_y4m(path: Path, size: int):
    offsets = []
    with open(path, "rb") as fh:
        header = fh.readline(4096)
        if not header.endswith(b"\n"):
            raise MediaFormatError(f"{path}: unterminated Y4M header")
        geometry = _parse_y4m_header(header[:-1])
        pos = len(header)
        while pos < size:
            fh.seek(pos)
            marker = fh.readline(4096)
            if not marker.startswith(b"FRAME") or not marker.endswith(b"\n"):
                raise MediaFormatError(f"{path}: bad FRAME marker at byte {pos}")
            data = pos + len(marker)
            if data + geometry.frame_bytes > size:
                raise MediaFormatError(f"{path}: truncated frame {len(offsets)}")
            offsets.append(data)
            pos = data + geometry.frame_bytes
    return geometry, offsets


def open_sequence(path, geometry: Geometry | None = None) -> SequenceHandle:
    """Open a raw or Y4M 4:2:0 sequence and count its frames exactly."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        magic = fh.read(len(Y4M_MAGIC))
    if magic == Y4M_MAGIC:
        g, offsets = _scan_y4m(path, size)
        return SequenceHandle(path, g, len(offsets), "y4m", tuple(offsets))
    if geometry is None:
        raise MediaFormatError(f"{path}: headerless raw input needs width/height/bit depth/fps")
    if size % geometry.frame_bytes:
        raise MediaFormatError(
            f"{path}: {size} bytes is not a multiple of the {geometry.frame_bytes}-byte frame size")
    count = size // geometry.frame_bytes
    offsets = tuple(i * geometry.frame_bytes for i in range(count))
    return SequenceHandle(path, geometry, count, "yuv", offsets)


def read_frame(handle: SequenceHandle, index: int) -> FrameBuffer:
    if not 0 <= index < handle.frame_count:
        raise IndexError(f"frame {index} out of range [0, {handle.frame_count})")
    g = handle.geometry
    with open(handle.path, "rb") as fh:
        fh.seek(handle.offsets[index])
        data = fh.read(g.frame_bytes)
    if len(data) != g.frame_bytes:
        raise OSError(f"{handle.path}: short read for frame {index}")
    return FrameBuffer.from_bytes(data, g, frame_index=index)


def iter_frames(handle: SequenceHandle, start=0, stop=None) -> Iterator[FrameBuffer]:
    stop = handle.frame_count if stop is None else min(stop, handle.frame_count)
    for i in range(start, stop):
        yield read_frame(handle, i)


def y4m_header(geometry: Geometry) -> bytes:
    tag = "C420p10" if geometry.bit_depth == 10 else "C420jpeg"
    fps = geometry.frame_rate
    return (f"YUV4MPEG2 W{geometry.width} H{geometry.height} "
            f"F{fps.numerator}:{fps.denominator} Ip A1:1 {tag}\n").encode("ascii")


def write_sequence(frames: Iterable[FrameBuffer], path, format: str | None = None,
                   geometry: Geometry | None = None) -> Path:
    """Write frames as raw ``yuv`` or ``y4m`` (inferred from the suffix by default).

    ``geometry`` is only needed to write the header of an empty Y4M file.
    """
    path = Path(path)
    fmt = format or ("y4m" if path.suffix.lower() == ".y4m" else "yuv")
    if fmt not in ("yuv", "y4m"):
        raise ValueError(f"unknown format {fmt!r}")
    frames = list(frames)
    if frames:
        first = frames[0].geometry
        for f in frames[1:]:
            if (f.width, f.height, f.bit_depth) != (first.width, first.height, first.bit_depth):
                raise ValueError("all frames must share geometry and bit depth")
        geometry = first if geometry is None else Geometry(
            first.width, first.height, first.bit_depth, geometry.frame_rate)
    elif fmt == "y4m" and geometry is None:
        raise ValueError("an empty Y4M file needs an explicit geometry for its header")
    try:
        with open(path, "wb") as fh:
            if fmt == "y4m":
                fh.write(y4m_header(geometry))
            for f in frames:
                if fmt == "y4m":
                    fh.write(b"FRAME\n")
                fh.write(f.to_bytes())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write video to {path}: {exc.strerror}") from exc
    return path


def read_sequence(path, geometry: Geometry | None = None, start=0, stop=None) -> list:
    handle = open_sequence(path, geometry)
    return list(iter_frames(handle, start, stop))


def frames_digest(frames: Sequence[FrameBuffer]) -> str:
    """SHA-256 over sample data and geometry; stable across file moves."""
    h = hashlib.sha256()
    for f in frames:
        h.update(f"{f.width}x{f.height}@{f.bit_depth}:{f.frame_rate};".encode())
        h.update(f.to_bytes())
    return h.hexdigest()

