"""DCT-energy scene complexity features.

Each plane is cut into w x w blocks (32 on luma, 16 on chroma, edge blocks
replicate-padded). A block's texture energy is the sum of absolute AC
coefficients of its orthonormal 2-D DCT-II. Samples are brought to the
8-bit scale first so 8- and 10-bit content give comparable features.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import fft
from sklearn.base import BaseEstimator, TransformerMixin

from .media_io import FrameBuffer

FEATURE_NAMES = ("E_Y", "h", "L_Y", "E_U", "L_U", "E_V", "L_V")


@dataclass(frozen=True)
class SceneFeatures:
    E_Y: float
    h: float
    L_Y: float
    E_U: float
    L_U: float
    E_V: float
    L_V: float
    frame_count: int = 1

    def __post_init__(self):
        for name in FEATURE_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"feature {name} must be finite and non-negative, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)

    def to_dict(self) -> dict:
        d = {n: getattr(self, n) for n in FEATURE_NAMES}
        d["frames"] = self.frame_count
        return d

    @classmethod
    def from_dict(cls, d) -> "SceneFeatures":
        count = d.get("frames", d.get("frame_count", 1))
        return cls(*(float(d[n]) for n in FEATURE_NAMES), frame_count=int(count))

    @classmethod
    def from_array(cls, values, frame_count=1) -> "SceneFeatures":
        return cls(*(float(v) for v in values), frame_count=frame_count)


@lru_cache(maxsize=8)
def dct_matrix(n: int, dtype=np.float64) -> np.ndarray:
    """Orthonormal DCT-II matrix C with coefficients ``C @ x``."""
    k = np.arange(n)
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / (2 * n))
    c[0] /= np.sqrt(2.0)
    c = c.astype(dtype)
    c.setflags(write=False)
    return c


def block_texture_energy(block) -> float:
    """Sum of |AC| coefficients of the orthonormal 2-D DCT-II of one block."""
    coeffs = fft.dctn(np.asarray(block, dtype=np.float64), norm="ortho")
    return float(np.abs(coeffs).sum() - abs(coeffs[0, 0]))


def pad_to_blocks(plane, w):
    h, wd = plane.shape
    ph, pw = -h % w, -wd % w
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def plane_block_energies(plane, w: int, bit_depth=8, strip_rows=64) -> np.ndarray:
    """Texture energy of every w x w block of a plane, on the 8-bit scale.

    Blocks are mean-centred before the transform so that a DC-only shift
    leaves the result bit-identical; block means are exact in float32 since
    w*w is a power of two and samples carry at most two fractional bits.
    The plane is processed in strips of about ``strip_rows`` sample rows so
    the working set stays in cache.
    """
    plane = pad_to_blocks(np.asarray(plane), w)
    H, W = plane.shape
    by, bx = H // w, W // w
    c = dct_matrix(w, np.float32)
    ones = np.ones(w, np.float32)
    scale = np.float32(1.0 / (1 << (bit_depth - 8))) if bit_depth != 8 else None
    step = max(1, strip_rows // w)
    energy = np.empty((by, bx))
    for s in range(0, by, step):
        n = min(step, by - s)
        p = plane[s * w:(s + n) * w].astype(np.float32)
        if scale is not None:
            p *= scale
        means = (p.reshape(-1, w) @ ones).reshape(n, w, bx).sum(axis=1) / np.float32(w * w)
        p.reshape(n, w, bx, w)[...] -= means[:, None, :, None]
        coeffs = np.matmul(c, (p.reshape(-1, w) @ c.T).reshape(n, w, W))
        np.abs(coeffs, out=coeffs)
        blocks = coeffs.reshape(n, w, bx, w)
        energy[s:s + n] = blocks.sum(axis=3, dtype=np.float64).sum(axis=1) - blocks[:, 0, :, 0]
    return energy


def plane_mean(plane, bit_depth=8) -> float:
    """Mean sample value on the 8-bit scale."""
    return float(np.mean(plane, dtype=np.float64)) / (1 << (bit_depth - 8))


@dataclass(frozen=True)
class FrameStats:
    """Per-frame block energies, plane means and squared block sizes."""

    energies: tuple
    means: tuple
    block_sizes_sq: tuple

    def plane_energy(self, p: int) -> float:
        e = self.energies[p]
        return float(e.sum() / e.size / self.block_sizes_sq[p])


def frame_stats(frame: FrameBuffer, luma_block=32, chroma_block=16) -> FrameStats:
    sizes = (luma_block, chroma_block, chroma_block)
    energies, means = [], []
    for plane, w in zip(frame.planes, sizes):
        energies.append(plane_block_energies(plane, w, frame.bit_depth))
        means.append(plane_mean(plane, frame.bit_depth))
    return FrameStats(tuple(energies), tuple(means), tuple(w * w for w in sizes))


def temporal_energy_gradient(prev: FrameStats, cur: FrameStats) -> float:
    """Mean absolute change of luma block energy, normalised per sample."""
    diff = np.abs(cur.energies[0] - prev.energies[0])
    return float(diff.sum() / diff.size / cur.block_sizes_sq[0])


def frame_features(frames: Iterable[FrameBuffer], luma_block=32, chroma_block=16,
                   n_jobs=1) -> list:
    """Per-frame feature records ``{frame, E_Y, h, L_Y, ...}``; h of frame 0 is 0."""
    stats = _all_stats(frames, luma_block, chroma_block, n_jobs)
    rows = []
    for t, s in enumerate(stats):
        grad = temporal_energy_gradient(stats[t - 1], s) if t else 0.0
        rows.append({
            "frame": t,
            "E_Y": s.plane_energy(0), "h": grad, "L_Y": s.means[0],
            "E_U": s.plane_energy(1), "L_U": s.means[1],
            "E_V": s.plane_energy(2), "L_V": s.means[2],
        })
    return rows


def _all_stats(frames, luma_block, chroma_block, n_jobs):
    def one(f):
        return frame_stats(f, luma_block, chroma_block)

    if n_jobs == 1:
        return [one(f) for f in frames]
    frames = list(frames)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, frames))


def _check_uniform(frames: Sequence[FrameBuffer]):
    g = (frames[0].width, frames[0].height)
    for f in frames[1:]:
        if (f.width, f.height) != g:
            raise ValueError("all frames of a scene must share the same geometry")


def extract_scene_features(frames: Iterable[FrameBuffer], luma_block=32, chroma_block=16,
                           n_jobs=1) -> SceneFeatures:
    """Average the per-frame features over a scene.

    E and L are means over all frames; h is the mean over consecutive frame
    pairs, and 0 for a single-frame scene.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("cannot extract features from an empty scene")
    _check_uniform(frames)
    rows = frame_features(frames, luma_block, chroma_block, n_jobs)
    n = len(rows)
    agg = {name: math.fsum(r[name] for r in rows) / n for name in FEATURE_NAMES if name != "h"}
    agg["h"] = math.fsum(r["h"] for r in rows[1:]) / (n - 1) if n > 1 else 0.0
    return SceneFeatures(**agg, frame_count=n)


class ComplexityFeatureExtractor(TransformerMixin, BaseEstimator):
    """Map scenes (sequences of frames) to a ``(n_scenes, 7)`` feature matrix.

    Columns follow :data:`FEATURE_NAMES`. The transform is stateless, so
    ``fit`` only records the output width.
    """

    def __init__(self, luma_block=32, chroma_block=16, n_jobs=1):
        self.luma_block = luma_block
        self.chroma_block = chroma_block
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def transform(self, X):
        return np.vstack([
            extract_scene_features(scene, self.luma_block, self.chroma_block, self.n_jobs).as_array()
            for scene in X
        ]) if len(X) else np.empty((0, len(FEATURE_NAMES)))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)
