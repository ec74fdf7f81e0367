"""Produce RD points, either through an external encoder/decoder pair or a mock.

External mode follows the ground-truth chain: downscale the scene to the
ladder resolution, encode at a fixed QP (optionally capped by a maxrate),
decode, upscale back to the source size and score PSNR/XPSNR against the
source. Mock mode evaluates analytic bitrate and quality surfaces, so whole
pipelines run in seconds without any codec installed.

Results are cached on disk as ``<cache>/<scene-key>/<r>_<q>[_m<maxrate>].json``
where the scene key hashes the scene content together with the encoder
configuration.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .complexity import SceneFeatures, extract_scene_features
from .hull import HullConfig
from .media_io import Geometry, frames_digest, read_sequence, write_sequence
from .quality import frame_scores
from .resample import ResampleSpec, resample, scaled_width

logger = logging.getLogger(__name__)

RD_FIELDS = ("scene_id", "resolution", "qp", "bitrate_kbps", "psnr_db", "xpsnr_db",
             "enc_time_s", "dec_time_s")


class EncodeError(RuntimeError):
    """An external encode or decode step failed."""


class SweepError(RuntimeError):
    """Some cells of a sweep failed; ``points`` holds the ones that succeeded."""

    def __init__(self, failures, points):
        self.failures = failures
        self.points = points
        cells = ", ".join(f"{r}p/qp{q}" for r, q, _ in failures[:8])
        super().__init__(f"{len(failures)} sweep cell(s) failed: {cells}")


@dataclass(frozen=True)
class RdPoint:
    scene_id: str
    resolution: int
    qp: int
    bitrate_kbps: float
    psnr_db: float
    xpsnr_db: float
    enc_time_s: float = 0.0
    dec_time_s: float = 0.0

    def __post_init__(self):
        if not self.bitrate_kbps > 0:
            raise ValueError(f"bitrate must be positive, got {self.bitrate_kbps}")
        if self.enc_time_s < 0 or self.dec_time_s < 0:
            raise ValueError("times must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "RdPoint":
        return cls(str(d["scene_id"]), int(d["resolution"]), int(d["qp"]),
                   float(d["bitrate_kbps"]), float(d["psnr_db"]), float(d["xpsnr_db"]),
                   float(d.get("enc_time_s", 0.0)), float(d.get("dec_time_s", 0.0)))


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


@dataclass(frozen=True)
class EncoderSpec:
    """Command templates for an external encoder and decoder.

    Placeholders: ``{input} {output} {qp} {maxrate} {width} {height} {fps}
    {threads} {bitdepth}``. Encode needs ``{input} {output} {qp}``; decode
    needs ``{input} {output}``. ``{maxrate}`` is 0 for uncapped encodes.
    """

    encode_cmd: str
    decode_cmd: str
    threads: int = 4
    env: dict = field(default_factory=dict)
    bitrate_pattern: str | None = None

    REQUIRED_ENCODE = ("input", "output", "qp")
    REQUIRED_DECODE = ("input", "output")

    def __post_init__(self):
        for name, template, required in (("encode", self.encode_cmd, self.REQUIRED_ENCODE),
                                         ("decode", self.decode_cmd, self.REQUIRED_DECODE)):
            missing = [p for p in required if "{" + p + "}" not in template]
            if missing:
                raise ValueError(f"{name} template lacks placeholders {missing}")

    def to_dict(self) -> dict:
        return {"encode_cmd": self.encode_cmd, "decode_cmd": self.decode_cmd,
                "threads": self.threads, "env": dict(self.env),
                "bitrate_pattern": self.bitrate_pattern}

    @classmethod
    def from_dict(cls, d) -> "EncoderSpec":
        return cls(d["encode_cmd"], d["decode_cmd"], int(d.get("threads", 4)),
                   dict(d.get("env", {})), d.get("bitrate_pattern"))

    @property
    def digest(self) -> str:
        return _digest(self.to_dict())


# Example templates for VVenC (QP with a maxrate cap) and the VTM decoder.
VVENC_EXAMPLE_SPEC = {
    "encode_cmd": ("vvencapp --input {input} --size {width}x{height} --framerate {fps} "
                   "--format yuv420{bitdepth_suffix} --preset faster --qp {qp} "
                   "--maxrate {maxrate}k --threads {threads} --output {output}"),
    "decode_cmd": "DecoderApp -b {input} -o {output} -d {bitdepth}",
    "threads": 4,
    "env": {},
}


@dataclass(frozen=True)
class MockEncoderParams:
    """Analytic encoder surfaces (synthetic defaults, not fitted to any codec).

    Bitrate: ``c * (r / 2160)**alpha * top_bitrate * 2**(-(q - q_ref) / qp_halving)``.
    Quality at bitrate b: ``base - motion_penalty * h + span(r) * b**g / (b**g + knee(r)**g)``
    with ``span(r) = span_lo + (span_hi - span_lo) * (r / 2160)**span_exp`` and
    ``knee(r) = c**knee_complexity_exp * knee_ref * (r / 2160)**knee_exp``.
    Lower resolutions saturate earlier and lower, so their RD curves cross.
    Encode/decode seconds: ``seconds * ((r / 2160)**2 * (1 + time_qp_gain * 2**(-(q - q_ref) / 6))
    + time_offset)``; the offset is a fixed per-encode cost.
    ``c`` is taken from ``complexity`` or derived from the scene features.
    """

    complexity: float | None = None
    alpha: float = 2.0
    qp_halving: float = 6.0
    q_ref: int = 10
    top_bitrate: float = 134400.0
    xpsnr_base: float = 24.0
    xpsnr_span_lo: float = 9.1
    xpsnr_span_hi: float = 26.0
    psnr_base: float = 22.0
    psnr_span_lo: float = 9.1
    psnr_span_hi: float = 28.0
    span_exp: float = 0.16
    knee_ref: float = 430.0
    knee_exp: float = 0.64
    knee_complexity_exp: float = 0.85
    motion_penalty: float = 2.0
    psnr_knee_scale: float = 0.8
    gamma: float = 0.53
    enc_seconds: float = 40.0
    dec_seconds: float = 2.0
    time_qp_gain: float = 0.5
    time_offset: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MockEncoderParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown mock parameters {sorted(unknown)}")
        return cls(**d)

    @property
    def digest(self) -> str:
        return _digest({"mock": self.to_dict()})


def mock_complexity(features: SceneFeatures, params: MockEncoderParams) -> float:
    if params.complexity is not None:
        return float(params.complexity)
    return ((0.5 + features.E_Y / 4.0) ** 0.6 * (1.0 + 2.0 * features.h) ** 0.5
            * (1.0 + 0.2 * (features.E_U + features.E_V)))


def mock_bitrate(c, resolution, qp, params: MockEncoderParams) -> float:
    s = resolution / 2160.0
    return c * s ** params.alpha * params.top_bitrate * 2.0 ** (-(qp - params.q_ref) / params.qp_halving)


def _logistic(b, knee, g):
    bg = b ** g
    return bg / (bg + knee ** g)


def mock_quality(c, resolution, bitrate, params: MockEncoderParams, motion=0.0):
    """``(psnr_db, xpsnr_db)`` of an encode at ``bitrate`` and ``resolution``."""
    s = resolution / 2160.0
    shape = s ** params.span_exp
    knee = c ** params.knee_complexity_exp * params.knee_ref * s ** params.knee_exp
    xspan = params.xpsnr_span_lo + (params.xpsnr_span_hi - params.xpsnr_span_lo) * shape
    pspan = params.psnr_span_lo + (params.psnr_span_hi - params.psnr_span_lo) * shape
    x = params.xpsnr_base - params.motion_penalty * motion + xspan * _logistic(bitrate, knee, params.gamma)
    p = params.psnr_base + pspan * _logistic(bitrate, knee * params.psnr_knee_scale, params.gamma)
    return p, x


def mock_encode(scene_features: SceneFeatures, resolution, qp, params=None,
                scene_id="scene", maxrate=None) -> RdPoint:
    """Deterministic analytic encode.

    Times are ``seconds * (pixel_fraction * rate_term + time_offset)``: they
    grow with the pixel count and with bitrate (low QP), plus a fixed
    per-encode cost.

    With ``maxrate`` the encode behaves like capped VBR: a QP whose natural
    bitrate exceeds the cap is held at the cap and scored there.
    """
    params = params or MockEncoderParams()
    c = mock_complexity(scene_features, params)
    b = mock_bitrate(c, resolution, qp, params)
    if maxrate is not None and b > maxrate:
        b = float(maxrate)
    p, x = mock_quality(c, resolution, b, params, scene_features.h)
    pixels = (resolution / 2160.0) ** 2
    rate_term = 1.0 + params.time_qp_gain * 2.0 ** (-(qp - params.q_ref) / params.qp_halving)
    cost = pixels * rate_term + params.time_offset
    return RdPoint(scene_id, int(resolution), int(qp), b, p, x,
                   params.enc_seconds * cost, params.dec_seconds * cost)


@dataclass
class Scene:
    """A temporally contiguous shot; the unit of features and ladders."""

    scene_id: str
    path: str | None = None
    start: int = 0
    stop: int | None = None
    features: SceneFeatures | None = None
    geometry: Geometry | None = None
    _frames: list | None = field(default=None, repr=False, compare=False)
    _hash: str | None = field(default=None, repr=False, compare=False)

    def frames(self) -> list:
        if self._frames is None:
            if self.path is None:
                raise ValueError(f"scene {self.scene_id} has no video path")
            self._frames = read_sequence(self.path, self.geometry, self.start, self.stop)
            if not self._frames:
                raise ValueError(f"scene {self.scene_id}: empty frame range")
        return self._frames

    def get_features(self) -> SceneFeatures:
        if self.features is None:
            self.features = extract_scene_features(self.frames())
        return self.features

    def content_hash(self) -> str:
        if self._hash is None:
            if self.path is not None:
                self._hash = frames_digest(self.frames())
            else:
                self._hash = _digest(self.get_features().to_dict())
        return self._hash

    @classmethod
    def from_frames(cls, scene_id, frames) -> "Scene":
        scene = cls(scene_id)
        scene._frames = list(frames)
        scene._hash = frames_digest(scene._frames)
        return scene


class ResultCache:
    """Directory-backed RD point cache; writes are atomic renames."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        self._memory = {}
        self._lock = threading.Lock()

    @staticmethod
    def _name(resolution, qp, maxrate):
        suffix = "" if maxrate is None else f"_m{maxrate:g}"
        return f"{resolution}_{qp}{suffix}.json"

    def path(self, scene_key, resolution, qp, maxrate=None) -> Path | None:
        if self.root is None:
            return None
        return self.root / scene_key / self._name(resolution, qp, maxrate)

    def get(self, scene_key, resolution, qp, maxrate=None) -> RdPoint | None:
        key = (scene_key, resolution, qp, maxrate)
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        path = self.path(scene_key, resolution, qp, maxrate)
        if path is None or not path.exists():
            return None
        try:
            point = RdPoint.from_dict(json.loads(path.read_text()))
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("ignoring corrupt cache entry %s (%s)", path, exc)
            return None
        with self._lock:
            self._memory[key] = point
        return point

    def put(self, scene_key, resolution, qp, point: RdPoint, maxrate=None):
        with self._lock:
            self._memory[(scene_key, resolution, qp, maxrate)] = point
        path = self.path(scene_key, resolution, qp, maxrate)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(point.to_dict(), fh, sort_keys=True)
        os.replace(tmp, path)


def _tail(text, n=800):
    text = text.decode(errors="replace") if isinstance(text, bytes) else (text or "")
    return text[-n:]


class EncodeHarness:
    """Encode (r, qp) cells for scenes, with caching and parallel sweeps.

    Mock mode is used when no :class:`EncoderSpec` is given.
    """

    def __init__(self, spec: EncoderSpec | None = None, mock_params: MockEncoderParams | None = None,
                 cache_dir=None, jobs=1, work_dir=None):
        self.spec = spec
        self.mock_params = mock_params or MockEncoderParams()
        self.cache = ResultCache(cache_dir)
        self.jobs = max(1, int(jobs))
        self.work_dir = work_dir

    @property
    def mock(self) -> bool:
        return self.spec is None

    @property
    def config_digest(self) -> str:
        return self.mock_params.digest if self.mock else self.spec.digest

    def scene_key(self, scene: Scene) -> str:
        return hashlib.sha256(f"{scene.content_hash()}|{self.config_digest}".encode()).hexdigest()[:24]

    def encode_point(self, scene: Scene, resolution: int, qp: int, maxrate=None) -> RdPoint:
        key = self.scene_key(scene)
        cached = self.cache.get(key, resolution, qp, maxrate)
        if cached is not None:
            return cached
        if self.mock:
            point = mock_encode(scene.get_features(), resolution, qp, self.mock_params,
                                scene.scene_id, maxrate)
        else:
            point = self._external_encode(scene, resolution, qp, maxrate)
        self.cache.put(key, resolution, qp, point, maxrate)
        return point

    def exhaustive_sweep(self, scene: Scene, config: HullConfig) -> list:
        """Every allowed (r, qp) cell, ordered by resolution then QP.

        Failed cells are reported together in a :class:`SweepError`; already
        finished cells stay cached so a rerun resumes the sweep.
        """
        cells = config.cells()
        scene.get_features() if self.mock else scene.frames()
        results, failures = {}, []

        def run(cell):
            return cell, self.encode_point(scene, *cell)

        if self.jobs == 1:
            for cell in cells:
                try:
                    results[cell] = self.encode_point(scene, *cell)
                except Exception as exc:  # noqa: BLE001 - reported per cell
                    failures.append((*cell, exc))
        else:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                futures = [(cell, pool.submit(self.encode_point, scene, *cell)) for cell in cells]
                for cell, fut in futures:
                    try:
                        results[cell] = fut.result()
                    except Exception as exc:  # noqa: BLE001
                        failures.append((*cell, exc))
        points = [results[c] for c in cells if c in results]
        if failures:
            for r, q, exc in failures:
                logger.error("scene %s %dp qp%d failed: %s", scene.scene_id, r, q, exc)
            raise SweepError(failures, points)
        return points

    # -- external tools -----------------------------------------------------

    def _format(self, template, **values):
        values.setdefault("threads", self.spec.threads)
        values["bitdepth_suffix"] = "_10" if values.get("bitdepth") == 10 else ""
        try:
            return template.format(**values)
        except KeyError as exc:
            raise EncodeError(f"unknown placeholder {exc} in command template") from exc

    def _run(self, cmd, what):
        env = dict(os.environ)
        env.update({k: str(v) for k, v in self.spec.env.items()})
        start = time.perf_counter()
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, env=env, check=False)
        except OSError as exc:
            raise EncodeError(f"{what} could not start: {exc}") from exc
        elapsed = time.perf_counter() - start
        if proc.returncode != 0:
            raise EncodeError(f"{what} exited with status {proc.returncode}: {_tail(proc.stderr)}")
        return proc, elapsed

    def _external_encode(self, scene: Scene, resolution, qp, maxrate) -> RdPoint:
        source = scene.frames()
        first = source[0]
        src_w, src_h, depth, fps = first.width, first.height, first.bit_depth, first.frame_rate
        width = scaled_width(src_w, src_h, resolution)
        down_spec = ResampleSpec(width, resolution)
        scaled = source if (width, resolution) == (src_w, src_h) else [resample(f, down_spec) for f in source]
        with tempfile.TemporaryDirectory(dir=self.work_dir) as tmp:
            tmp = Path(tmp)
            raw_in, bitstream, decoded = tmp / "input.yuv", tmp / "stream.bin", tmp / "decoded.yuv"
            write_sequence(scaled, raw_in, "yuv")
            common = dict(width=width, height=resolution, fps=float(fps), bitdepth=depth)
            enc_cmd = self._format(self.spec.encode_cmd, input=raw_in, output=bitstream, qp=qp,
                                   maxrate=0 if maxrate is None else maxrate, **common)
            proc, enc_time = self._run(enc_cmd, "encoder")
            if not bitstream.exists():
                raise EncodeError(f"encoder produced no output at {bitstream}")
            bitrate = self._bitrate(proc, bitstream, len(source), fps)
            dec_cmd = self._format(self.spec.decode_cmd, input=bitstream, output=decoded, **common)
            _, dec_time = self._run(dec_cmd, "decoder")
            try:
                recon = read_sequence(decoded, Geometry(width, resolution, depth, fps))
            except (OSError, ValueError) as exc:
                raise EncodeError(f"cannot read decoder output: {exc}") from exc
        if len(recon) != len(source):
            raise EncodeError(f"decoder returned {len(recon)} frames, expected {len(source)}")
        up_spec = ResampleSpec(src_w, src_h)
        if (width, resolution) != (src_w, src_h):
            recon = [resample(f, up_spec) for f in recon]
        scores = frame_scores(source, recon)
        psnr = float(np.mean([s["psnr"] for s in scores]))
        xpsnr = float(np.mean([s["xpsnr"] for s in scores]))
        return RdPoint(scene.scene_id, int(resolution), int(qp), bitrate, psnr, xpsnr,
                       enc_time, dec_time)

    def _bitrate(self, proc, bitstream: Path, n_frames, fps) -> float:
        if self.spec.bitrate_pattern:
            text = _tail(proc.stdout, 100000) + _tail(proc.stderr, 100000)
            match = re.search(self.spec.bitrate_pattern, text)
            if not match:
                raise EncodeError("bitrate pattern not found in encoder output")
            try:
                return float(match.group(1))
            except (IndexError, ValueError) as exc:
                raise EncodeError(f"unparsable bitrate {match.group(0)!r}") from exc
        duration = n_frames / float(fps)
        size = bitstream.stat().st_size
        if size == 0:
            raise EncodeError("encoder produced an empty bitstream")
        return size * 8 / 1000.0 / duration
