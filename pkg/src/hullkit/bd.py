"""Bjontegaard-Delta rate and quality between two RD curves.

Both curves are Pareto-cleaned, then interpolated with monotone piecewise
cubic Hermite splines in the log10-rate domain and integrated exactly over
the common interval. Curves with more than four points are used in full.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.interpolate import PchipInterpolator

MIN_POINTS = 4


class BDError(ValueError):
    """Raised when two curves cannot be compared."""


@dataclass(frozen=True)
class RdCurve:
    bitrates: np.ndarray
    qualities: np.ndarray
    label: str = ""

    def __post_init__(self):
        r = np.asarray(self.bitrates, dtype=np.float64)
        q = np.asarray(self.qualities, dtype=np.float64)
        if r.shape != q.shape or r.ndim != 1:
            raise ValueError("bitrates and qualities must be 1-D and equally long")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(q))):
            raise ValueError("RD points must be finite")
        if np.any(r <= 0):
            raise ValueError("bitrates must be positive")
        object.__setattr__(self, "bitrates", r)
        object.__setattr__(self, "qualities", q)

    def __len__(self):
        return len(self.bitrates)

    @property
    def points(self):
        return list(zip(self.bitrates.tolist(), self.qualities.tolist()))

    @classmethod
    def from_points(cls, points, label="") -> "RdCurve":
        pts = np.asarray(list(points), dtype=np.float64).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], label)


def pareto_clean(points, label="") -> RdCurve:
    """Drop every point dominated by another (bitrate <=, quality >=).

    The result is strictly increasing in both bitrate and quality.
    """
    curve = points if isinstance(points, RdCurve) else RdCurve.from_points(points, label)
    if len(curve) == 0:
        raise ValueError("pareto_clean needs at least one point")
    order = np.lexsort((-curve.qualities, curve.bitrates))
    keep_r, keep_q = [], []
    best = -np.inf
    for i in order:
        r, q = curve.bitrates[i], curve.qualities[i]
        if q > best:
            if keep_r and keep_r[-1] == r:
                continue
            keep_r.append(r)
            keep_q.append(q)
            best = q
    return RdCurve(np.array(keep_r), np.array(keep_q), label or curve.label)


def _prepare(curve) -> RdCurve:
    c = pareto_clean(curve)
    if len(c) < MIN_POINTS:
        raise BDError(f"curve {c.label!r} has {len(c)} Pareto points, need at least {MIN_POINTS}")
    return c


def _mean_difference(x_ref, y_ref, x_test, y_test):
    lo = max(x_ref[0], x_test[0])
    hi = min(x_ref[-1], x_test[-1])
    if not hi > lo:
        raise BDError("curves do not overlap")
    int_ref = PchipInterpolator(x_ref, y_ref).integrate(lo, hi)
    int_test = PchipInterpolator(x_test, y_test).integrate(lo, hi)
    return float((int_test - int_ref) / (hi - lo))


def bd_quality(curve_ref, curve_test) -> float:
    """Mean quality difference (test - ref) in dB at equal bitrate."""
    ref, test = _prepare(curve_ref), _prepare(curve_test)
    return _mean_difference(np.log10(ref.bitrates), ref.qualities,
                            np.log10(test.bitrates), test.qualities)


def bd_log_rate(curve_ref, curve_test) -> float:
    """Mean log10-bitrate difference (test - ref) at equal quality."""
    ref, test = _prepare(curve_ref), _prepare(curve_test)
    return _mean_difference(ref.qualities, np.log10(ref.bitrates),
                            test.qualities, np.log10(test.bitrates))


def bd_rate(curve_ref, curve_test) -> float:
    """Mean bitrate change (test vs ref) in percent at equal quality."""
    return 100.0 * (10.0 ** bd_log_rate(curve_ref, curve_test) - 1.0)


def curve_from_rows(rows: Iterable[dict], metric: str, label="") -> RdCurve:
    """Curve from ``bitrate_kbps`` and ``{metric}_db`` fields of mapping rows."""
    key = f"{metric}_db"
    pts = [(float(r["bitrate_kbps"]), float(r[key])) for r in rows]
    return RdCurve.from_points(pts, label)
