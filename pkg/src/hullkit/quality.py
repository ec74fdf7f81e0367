"""Full-reference XPSNR and PSNR on the luma plane.

XPSNR weights the squared error of each N x N block by a sensitivity
weight ``w_k = sqrt(a_P / a_k)``, where ``a_k`` is the squared mean
high-pass activity of the reference block and ``a_P`` a resolution- and
bit-depth-dependent anchor. Activities always come from the reference.

Spatial high-pass: 3x3 kernel, 12 at the centre, -2 on edge neighbours,
-1 on corners, edge-replicated. Temporal high-pass: ``s_t - s_{t-1}`` up
to 32 fps, ``s_t - 2 s_{t-1} + s_{t-2}`` above; zero without enough
history.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numba
import numpy as np

from .media_io import FrameBuffer

DEFAULT_FRAME_CAP = 100.0
UHD_PIXELS = 3840 * 2160


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def block_size(width: int, height: int) -> int:
    """Block edge length N for a W x H picture, at least 4."""
    return max(4, round_half_up(128.0 * math.sqrt(width * height / UHD_PIXELS)))


@dataclass(frozen=True)
class BlockGrid:
    """Tiling of a picture into N x N blocks; edge blocks are truncated."""

    width: int
    height: int
    size: int

    @property
    def cols(self) -> int:
        return -(-self.width // self.size)

    @property
    def rows(self) -> int:
        return -(-self.height // self.size)

    def blocks(self) -> list:
        """``(x0, y0, x1, y1)`` per block, row-major."""
        n = self.size
        return [(bx * n, by * n, min((bx + 1) * n, self.width), min((by + 1) * n, self.height))
                for by in range(self.rows) for bx in range(self.cols)]

    def sample_counts(self) -> np.ndarray:
        n = self.size
        ys = np.minimum(np.arange(1, self.rows + 1) * n, self.height) - np.arange(self.rows) * n
        xs = np.minimum(np.arange(1, self.cols + 1) * n, self.width) - np.arange(self.cols) * n
        return np.outer(ys, xs)


def block_grid(width: int, height: int) -> BlockGrid:
    if width < 1 or height < 1:
        raise ValueError("picture dimensions must be positive")
    return BlockGrid(width, height, block_size(width, height))


@dataclass(frozen=True)
class XpsnrConfig:
    bit_depth: int
    width: int
    height: int
    frame_rate: Fraction = Fraction(30)
    activity_floor: float | None = None
    frame_cap: float = DEFAULT_FRAME_CAP

    def __post_init__(self):
        if self.activity_floor is not None and self.activity_floor <= 0:
            raise ValueError("activity floor must be positive")

    @classmethod
    def for_frame(cls, frame: FrameBuffer, **kwargs) -> "XpsnrConfig":
        return cls(frame.bit_depth, frame.width, frame.height, frame.frame_rate, **kwargs)

    @property
    def block_size(self) -> int:
        return block_size(self.width, self.height)

    @property
    def a_min(self) -> float:
        if self.activity_floor is not None:
            return float(self.activity_floor)
        return float(2 ** (self.bit_depth - 6))

    @property
    def picture_activity(self) -> float:
        """Anchor activity; a block with exactly this activity gets weight 1."""
        return 2.0 ** (2 * self.bit_depth - 9) * math.sqrt(UHD_PIXELS / (self.width * self.height))

    @property
    def temporal_order(self) -> int:
        return 2 if self.frame_rate > 32 else 1

    @property
    def peak(self) -> int:
        return (1 << self.bit_depth) - 1


@dataclass
class BlockWeightMap:
    """Per-block activity, weight and SSE, each shaped ``(rows, cols)``."""

    activity: np.ndarray
    weight: np.ndarray
    sse: np.ndarray
    block_size: int

    def rows(self, frame_index=0):
        """Flat records for CSV dumps."""
        n = self.block_size
        for (by, bx), a in np.ndenumerate(self.activity):
            yield {"frame": frame_index, "block_x": bx * n, "block_y": by * n,
                   "activity": float(a), "weight": float(self.weight[by, bx]),
                   "sse": int(self.sse[by, bx])}


@numba.njit(cache=True, boundscheck=False)
def _block_sums(ref, prev1, prev2, dist, order, n):
    """Per-block sums of |h_s| + 2|h_t| over the reference and of squared error."""
    H, W = ref.shape
    by = (H + n - 1) // n
    bx = (W + n - 1) // n
    act = np.zeros((by, bx), np.int64)
    sse = np.zeros((by, bx), np.int64)
    for y in range(H):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < H - 1 else H - 1
        bj = y // n
        for bi in range(bx):
            x0 = bi * n
            x1 = min(x0 + n, W)
            sa = np.int64(0)
            ss = np.int64(0)
            for x in range(x0, x1):
                xm = max(x - 1, 0)
                xp = min(x + 1, W - 1)
                c = np.int32(ref[y, x])
                hs = (12 * c
                      - 2 * (np.int32(ref[ym, x]) + np.int32(ref[yp, x])
                             + np.int32(ref[y, xm]) + np.int32(ref[y, xp]))
                      - (np.int32(ref[ym, xm]) + np.int32(ref[ym, xp])
                         + np.int32(ref[yp, xm]) + np.int32(ref[yp, xp])))
                if order == 1:
                    ht = c - np.int32(prev1[y, x])
                elif order == 2:
                    ht = c - 2 * np.int32(prev1[y, x]) + np.int32(prev2[y, x])
                else:
                    ht = np.int32(0)
                e = np.int64(c - np.int32(dist[y, x]))
                sa += abs(hs) + 2 * abs(ht)
                ss += e * e
            act[bj, bi] += sa
            sse[bj, bi] += ss
    return act, sse


def _check_pair(ref: FrameBuffer, dist: FrameBuffer):
    if (ref.width, ref.height, ref.bit_depth) != (dist.width, dist.height, dist.bit_depth):
        raise ValueError(
            f"geometry mismatch: reference {ref.width}x{ref.height}@{ref.bit_depth}bit, "
            f"distorted {dist.width}x{dist.height}@{dist.bit_depth}bit")


def _history(ref: FrameBuffer, history: Sequence[FrameBuffer], order: int):
    """Temporal order actually usable and the one or two previous reference lumas."""
    history = list(history)
    for h in history:
        if (h.width, h.height) != (ref.width, ref.height):
            raise ValueError("history frames must match the reference geometry")
    if len(history) < order:
        return 0, ref.y, ref.y
    prev1 = history[-1].y
    prev2 = history[-2].y if order == 2 else ref.y
    return order, prev1, prev2


def block_activity_sums(ref: FrameBuffer, dist: FrameBuffer, history=(), config=None):
    """Raw per-block integer sums ``(activity_sum, sse)`` on the luma plane."""
    _check_pair(ref, dist)
    config = config or XpsnrConfig.for_frame(ref)
    order, p1, p2 = _history(ref, history, config.temporal_order)
    return _block_sums(ref.y, p1, p2, dist.y, order, config.block_size)


def activities_from_sums(act_sums, config: XpsnrConfig) -> np.ndarray:
    grid = BlockGrid(config.width, config.height, config.block_size)
    mean_act = act_sums / (4.0 * grid.sample_counts())
    return np.maximum(config.a_min ** 2, mean_act * mean_act)


def visual_activity(block, frame: FrameBuffer, history=(), config=None) -> float:
    """Activity of one block ``(x0, y0, x1, y1)`` of ``frame``."""
    config = config or XpsnrConfig.for_frame(frame)
    x0, y0, x1, y1 = block
    order, p1, p2 = _history(frame, history, config.temporal_order)
    hs = spatial_highpass(frame.y)[y0:y1, x0:x1]
    cur = frame.y[y0:y1, x0:x1].astype(np.int64)
    if order == 1:
        ht = cur - p1[y0:y1, x0:x1]
    elif order == 2:
        ht = cur - 2 * p1[y0:y1, x0:x1].astype(np.int64) + p2[y0:y1, x0:x1]
    else:
        ht = np.zeros_like(cur)
    total = np.abs(hs).sum() + 2 * np.abs(ht).sum()
    mean_act = total / (4.0 * cur.size)
    return max(config.a_min ** 2, mean_act * mean_act)


def spatial_highpass(plane) -> np.ndarray:
    """3x3 high-pass (12 centre, -2 edges, -1 corners) with edge replication."""
    p = np.pad(np.asarray(plane, dtype=np.int64), 1, mode="edge")
    c = p[1:-1, 1:-1]
    edges = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]
    corners = p[:-2, :-2] + p[:-2, 2:] + p[2:, :-2] + p[2:, 2:]
    return 12 * c - 2 * edges - corners


def frame_xpsnr(ref: FrameBuffer, dist: FrameBuffer, ref_history=(), config=None):
    """XPSNR of one frame in dB plus its :class:`BlockWeightMap`.

    ``ref_history`` holds preceding reference frames, oldest first.
    """
    config = config or XpsnrConfig.for_frame(ref)
    act_sums, sse = block_activity_sums(ref, dist, ref_history, config)
    activity = activities_from_sums(act_sums, config)
    weight = np.sqrt(config.picture_activity / activity)
    wsse = float(np.sum(weight * sse))
    bmap = BlockWeightMap(activity, weight, sse, config.block_size)
    if wsse == 0.0:
        return config.frame_cap, bmap
    value = 10.0 * math.log10(config.peak ** 2 * config.width * config.height / wsse)
    return value, bmap


def psnr_from_sse(sse: int, n_samples: int, bit_depth: int, frame_cap=DEFAULT_FRAME_CAP) -> float:
    if sse == 0:
        return frame_cap
    peak = (1 << bit_depth) - 1
    return 10.0 * math.log10(peak * peak * n_samples / sse)


def frame_psnr(ref: FrameBuffer, dist: FrameBuffer, frame_cap=DEFAULT_FRAME_CAP) -> float:
    _check_pair(ref, dist)
    diff = ref.y.astype(np.int64) - dist.y.astype(np.int64)
    sse = int(np.dot(diff.ravel(), diff.ravel()))
    return psnr_from_sse(sse, diff.size, ref.bit_depth, frame_cap)


def _pairs(ref_seq, dist_seq):
    ref_it, dist_it = iter(ref_seq), iter(dist_seq)
    while True:
        r = next(ref_it, None)
        d = next(dist_it, None)
        if r is None and d is None:
            return
        if r is None or d is None:
            raise ValueError("reference and distorted sequences differ in length")
        yield r, d


def frame_scores(ref_seq: Iterable[FrameBuffer], dist_seq: Iterable[FrameBuffer],
                 config_kwargs=None, with_blocks=False):
    """Per-frame ``{frame, xpsnr, psnr}`` records, streaming both inputs."""
    config_kwargs = config_kwargs or {}
    history: deque = deque(maxlen=2)
    config = None
    out = []
    for t, (r, d) in enumerate(_pairs(ref_seq, dist_seq)):
        if config is None:
            config = XpsnrConfig.for_frame(r, **config_kwargs)
        x, bmap = frame_xpsnr(r, d, history, config)
        psnr = psnr_from_sse(int(bmap.sse.sum()), r.width * r.height, r.bit_depth,
                             config.frame_cap)
        rec = {"frame": t, "xpsnr": x, "psnr": psnr}
        if with_blocks:
            rec["blocks"] = bmap
        out.append(rec)
        history.append(r)
    if not out:
        raise ValueError("cannot score empty sequences")
    return out


def sequence_xpsnr(ref_seq, dist_seq, **config_kwargs) -> float:
    """Arithmetic mean of per-frame XPSNR values (capped frames included)."""
    scores = frame_scores(ref_seq, dist_seq, config_kwargs)
    return math.fsum(s["xpsnr"] for s in scores) / len(scores)


def sequence_psnr(ref_seq, dist_seq, frame_cap=DEFAULT_FRAME_CAP) -> float:
    values = [frame_psnr(r, d, frame_cap) for r, d in _pairs(ref_seq, dist_seq)]
    if not values:
        raise ValueError("cannot score empty sequences")
    return math.fsum(values) / len(values)
