"""Separable bicubic resampling of 4:2:0 frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .media_io import FrameBuffer
from .utils.validation import check_geometry


@dataclass(frozen=True)
class ResampleSpec:
    target_width: int
    target_height: int
    kernel_parameter: float = -0.5

    def __post_init__(self):
        check_geometry(self.target_width, self.target_height)


def cubic_kernel(x, a=-0.5):
    """Keys cubic convolution kernel; support is (-2, 2)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def axis_taps(n_src, n_dst, a=-0.5):
    """Source indices and weights, shape (n_dst, 4), for one axis.

    Pixel centres are aligned: ``x_src = (x_dst + 0.5) * n_src / n_dst - 0.5``.
    Out-of-range taps are clamped to the edge sample (replication).
    """
    pos = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    base = np.floor(pos)
    frac = pos - base
    offsets = np.arange(-1, 3)
    idx = base[:, None].astype(np.int64) + offsets[None, :]
    weights = cubic_kernel(frac[:, None] - offsets[None, :], a)
    return np.clip(idx, 0, n_src - 1), weights


def resample_plane(plane, width, height, a=-0.5, bit_depth=8):
    """Horizontal pass then vertical pass, one final rounding and clamp."""
    src = np.asarray(plane, dtype=np.float64)
    h_src, w_src = src.shape
    if (w_src, h_src) == (width, height):
        return np.array(plane, copy=True)
    xi, xw = axis_taps(w_src, width, a)
    yi, yw = axis_taps(h_src, height, a)
    tmp = np.zeros((h_src, width))
    for k in range(4):
        tmp += src[:, xi[:, k]] * xw[:, k]
    out = np.zeros((height, width))
    for k in range(4):
        out += tmp[yi[:, k], :] * yw[:, k, None]
    peak = (1 << bit_depth) - 1
    return np.clip(np.floor(out + 0.5), 0, peak).astype(plane.dtype)


def resample(frame: FrameBuffer, spec: ResampleSpec) -> FrameBuffer:
    w, h = spec.target_width, spec.target_height
    a = spec.kernel_parameter
    d = frame.bit_depth
    planes = (
        resample_plane(frame.y, w, h, a, d),
        resample_plane(frame.u, w // 2, h // 2, a, d),
        resample_plane(frame.v, w // 2, h // 2, a, d),
    )
    return FrameBuffer(planes, d, frame.frame_index, frame.frame_rate)


def scaled_width(src_width, src_height, target_height):
    """Width for ``target_height`` keeping the aspect ratio, rounded to even."""
    return max(2, 2 * int(round(src_width * target_height / src_height / 2.0)))


class BicubicResampler(TransformerMixin, BaseEstimator):
    """Transformer resizing each frame of a sequence to a fixed size.

    Parameters
    ----------
    width, height : int
        Output luma geometry (even).
    a : float, default=-0.5
        Bicubic kernel parameter.
    """

    def __init__(self, width=1920, height=1080, a=-0.5):
        self.width = width
        self.height = height
        self.a = a

    def fit(self, X=None, y=None):
        self.spec_ = ResampleSpec(self.width, self.height, self.a)
        return self

    def transform(self, X):
        spec = ResampleSpec(self.width, self.height, self.a)
        return [resample(f, spec) for f in X]
