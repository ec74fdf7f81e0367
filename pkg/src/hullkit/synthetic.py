"""Seeded synthetic test scenes: moving sinusoidal texture plus noise."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .media_io import FrameBuffer, write_sequence


def synthetic_scene(seed, width=160, height=96, n_frames=4, bit_depth=8, fps=30):
    """Frames whose texture, motion and brightness are drawn from ``seed``.

    Different seeds give scenes spanning a wide range of texture energy and
    temporal activity, which is what the complexity features respond to.
    """
    rng = np.random.default_rng(seed)
    peak = (1 << bit_depth) - 1
    scale = peak / 255.0
    brightness = rng.uniform(50, 190)
    n_waves = int(rng.integers(1, 5))
    amps = rng.uniform(0, 45, n_waves) * rng.uniform(0.1, 1.0)
    freqs = rng.uniform(0.02, 0.6, (n_waves, 2)) * rng.choice([-1, 1], (n_waves, 2))
    phases = rng.uniform(0, 2 * np.pi, n_waves)
    noise = rng.uniform(0, 12) * rng.uniform(0, 1)
    velocity = rng.uniform(-4, 4, 2) * rng.uniform(0, 1)
    chroma_mean = rng.uniform(90, 170, 2)
    chroma_amp = rng.uniform(0, 15, 2)

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = np.mgrid[0:height // 2, 0:width // 2].astype(np.float64)
    frames = []
    for t in range(n_frames):
        dx, dy = velocity * t
        luma = np.full((height, width), brightness)
        for a, (fx, fy), ph in zip(amps, freqs, phases):
            luma += a * np.sin(fx * (xx - dx) + fy * (yy - dy) + ph)
        luma += noise * rng.standard_normal((height, width))
        chroma = [
            m + a * np.sin(0.1 * (cx - dx / 2) + 0.07 * (cy - dy / 2) + k)
            for k, (m, a) in enumerate(zip(chroma_mean, chroma_amp))
        ]
        planes = [np.clip(np.rint(p * scale), 0, peak) for p in [luma] + chroma]
        frames.append(FrameBuffer(tuple(planes), bit_depth, t, fps))
    return frames


def noise_frames(seed, width, height, n_frames=1, bit_depth=8, fps=30):
    """Uniform random frames (worst case for texture and temporal activity)."""
    rng = np.random.default_rng(seed)
    hi = 1 << bit_depth
    return [FrameBuffer((rng.integers(0, hi, (height, width)),
                         rng.integers(0, hi, (height // 2, width // 2)),
                         rng.integers(0, hi, (height // 2, width // 2))), bit_depth, t, fps)
            for t in range(n_frames)]


def write_synthetic_scenes(directory, n_scenes, seed=0, **kwargs) -> list:
    """Write ``n_scenes`` Y4M files and return manifest scene entries."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_scenes):
        scene_id = f"scene{i:04d}"
        path = directory / f"{scene_id}.y4m"
        write_sequence(synthetic_scene(seed * 100003 + i, **kwargs), path)
        entries.append({"scene_id": scene_id, "path": str(path)})
    return entries
