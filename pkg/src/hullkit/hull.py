"""Bitrate ladder construction: exhaustive convex hull and predicted hull."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .complexity import SceneFeatures
from .predictor import (
    DegenerateBoundsWarning,
    ModelSet,
    interpolate_qp,
    normalized_height,
    predict_bitrate_bounds,
    predict_xpsnr,
    train_models,
)

DEFAULT_RESOLUTIONS = (360, 540, 720, 1080, 1440, 2160)
DEFAULT_BITRATES = (145, 300, 600, 900, 1600, 2400, 3400, 4500, 5800, 8100, 11600, 16800)
# Repo default, shaped like common HLS authoring ladders; not measured ground truth.
DEFAULT_FIXED_LADDER = {
    145: 360, 300: 360, 600: 540, 900: 540, 1600: 720, 2400: 720,
    3400: 1080, 4500: 1080, 5800: 1080, 8100: 1440, 11600: 2160, 16800: 2160,
}


@dataclass(frozen=True)
class HullConfig:
    resolutions: tuple = DEFAULT_RESOLUTIONS
    bitrates: tuple = DEFAULT_BITRATES
    r_max: int = 2160
    q_min: int = 10
    q_max: int = 50
    qp_step: int = 1

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolutions)
        rates = tuple(float(b) if not float(b).is_integer() else int(b) for b in self.bitrates)
        if not res or not rates:
            raise ValueError("resolution and bitrate sets must be non-empty")
        if list(res) != sorted(set(res)) or list(rates) != sorted(set(rates)):
            raise ValueError("resolutions and bitrates must be strictly ascending")
        if self.r_max not in res:
            raise ValueError(f"r_max {self.r_max} is not one of the resolutions {res}")
        if not self.q_min < self.q_max or self.qp_step < 1:
            raise ValueError("need q_min < q_max and a positive QP step")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "bitrates", rates)

    @property
    def allowed_resolutions(self) -> tuple:
        return tuple(r for r in self.resolutions if r <= self.r_max)

    @property
    def qps(self) -> tuple:
        qs = list(range(self.q_min, self.q_max + 1, self.qp_step))
        if qs[-1] != self.q_max:
            qs.append(self.q_max)
        return tuple(qs)

    def cells(self):
        return [(r, q) for r in self.allowed_resolutions for q in self.qps]

    def replace(self, **changes) -> "HullConfig":
        d = asdict(self)
        d.update(changes)
        return HullConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolutions"] = list(d["resolutions"])
        d["bitrates"] = list(d["bitrates"])
        return d


@dataclass
class LadderEntry:
    target_bitrate: float
    resolution: int
    qp: int
    predicted_xpsnr: float | None = None
    achieved_bitrate: float | None = None
    achieved_xpsnr: float | None = None
    flagged: bool = False

    def to_dict(self) -> dict:
        d = {"target_kbps": self.target_bitrate, "height": self.resolution, "qp": self.qp,
             "predicted_xpsnr": self.predicted_xpsnr}
        if self.achieved_bitrate is not None:
            d["achieved_kbps"] = self.achieved_bitrate
            d["achieved_xpsnr"] = self.achieved_xpsnr
        if self.flagged:
            d["flagged"] = True
        return d

    @classmethod
    def from_dict(cls, d) -> "LadderEntry":
        return cls(d["target_kbps"], int(d["height"]), int(d["qp"]), d.get("predicted_xpsnr"),
                   d.get("achieved_kbps"), d.get("achieved_xpsnr"), bool(d.get("flagged", False)))


def _check_cells(rd_points, config: HullConfig):
    have = {(p.resolution, p.qp) for p in rd_points}
    missing = [c for c in config.cells() if c not in have]
    if missing:
        shown = ", ".join(f"{r}p/qp{q}" for r, q in missing[:8])
        more = f" (+{len(missing) - 8} more)" if len(missing) > 8 else ""
        raise ValueError(f"rd_points miss {len(missing)} required cells: {shown}{more}")


def brute_force_hull(rd_points, config: HullConfig | None = None) -> list:
    """Best measured XPSNR per target among encodes not exceeding it.

    Ties go to lower bitrate, then lower resolution, then higher QP. When
    nothing fits under a target, the globally cheapest encode is used and
    the entry is flagged.
    """
    config = config or HullConfig()
    _check_cells(rd_points, config)
    allowed = set(config.cells())
    cands = [p for p in rd_points if (p.resolution, p.qp) in allowed]
    ladder = []
    for b in config.bitrates:
        feasible = [p for p in cands if p.bitrate_kbps <= b]
        if feasible:
            best = min(feasible, key=lambda p: (-p.xpsnr_db, p.bitrate_kbps, p.resolution, -p.qp))
            flagged = False
        else:
            best = min(cands, key=lambda p: (p.bitrate_kbps, p.resolution, -p.qp))
            flagged = True
        ladder.append(LadderEntry(b, best.resolution, best.qp, None, best.bitrate_kbps,
                                  best.xpsnr_db, flagged))
    return ladder


def _features_array(scene_features) -> np.ndarray:
    if isinstance(scene_features, SceneFeatures):
        return scene_features.as_array()
    return np.asarray(scene_features, dtype=np.float64).reshape(-1)


def predict_ladder(scene_features, config: HullConfig, models) -> list:
    """Predicted ladder: resolution by maximum predicted XPSNR, QP by interpolation.

    Resolutions above ``r_max`` are never considered; ties in predicted
    XPSNR go to the lower resolution.
    """
    f = _features_array(scene_features)
    res = np.array(config.allowed_resolutions, dtype=np.float64)
    rates = np.array(config.bitrates, dtype=np.float64)
    nb, nr = len(rates), len(res)
    grid_b = np.repeat(rates, nr)
    grid_r = np.tile(res, nb)
    X = np.column_stack([np.tile(f, (nb * nr, 1)), grid_b, normalized_height(grid_r)])
    x_hat = np.asarray(predict_xpsnr(models.xpsnr, X), dtype=np.float64).reshape(nb, nr)
    best = np.argmax(x_hat, axis=1)
    chosen = res[best]
    Xb = np.column_stack([np.tile(f, (nb, 1)), normalized_height(chosen)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBoundsWarning)
        b_max, b_min = predict_bitrate_bounds(models.bitrate_qmin, models.bitrate_qmax, Xb)
    ladder = []
    for i, b in enumerate(config.bitrates):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBoundsWarning)
            q = interpolate_qp(config.q_min, config.q_max, float(b_min[i]), float(b_max[i]), float(b))
        ladder.append(LadderEntry(b, int(chosen[i]), q, float(x_hat[i, best[i]])))
    return ladder


def interpolated_ladder(config: HullConfig, resolutions, bounds) -> list:
    """Ladder with given per-target resolutions and QPs from ``bounds(r) -> (b_max, b_min)``."""
    ladder = []
    for b, r in zip(config.bitrates, resolutions):
        b_max, b_min = bounds(r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBoundsWarning)
            q = interpolate_qp(config.q_min, config.q_max, b_min, b_max, float(b))
        ladder.append(LadderEntry(b, int(r), q))
    return ladder


def fixed_ladder(config: HullConfig, table, bounds) -> list:
    """Ladder from a fixed bitrate -> resolution table."""
    lookup = {float(k): int(v) for k, v in dict(table).items()}
    missing = [b for b in config.bitrates if float(b) not in lookup]
    if missing:
        raise ValueError(f"fixed ladder table has no row for targets {missing}")
    return interpolated_ladder(config, [lookup[float(b)] for b in config.bitrates], bounds)


def default_ladder(config: HullConfig, bounds, source_height=None) -> list:
    """Every target encoded at the source resolution."""
    r = source_height or config.resolutions[-1]
    return interpolated_ladder(config, [r] * len(config.bitrates), bounds)


def model_bounds(models, scene_features):
    """``bounds(r)`` callable backed by the two bitrate models."""
    f = _features_array(scene_features)

    def bounds(r):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBoundsWarning)
            return predict_bitrate_bounds(models.bitrate_qmin, models.bitrate_qmax,
                                          np.append(f, r / 2160.0))

    return bounds


class ConvexHullPredictor(BaseEstimator):
    """Learns per-title ladders from an RD dataset.

    ``fit`` trains the XPSNR model and the two bitrate-bound models on a
    dataset frame; ``predict`` maps scene features to one ladder per scene.

    Parameters
    ----------
    resolutions, bitrates : tuple
        Candidate heights and target bitrates (kbps).
    r_max : int
        Highest resolution a ladder may use.
    q_min, q_max : int
        QP range of the encoder sweep.
    n_estimators, max_depth, learning_rate : boosting hyperparameters.
    cv_folds : int
        Scene-disjoint folds used to report CV error during ``fit``.
    random_state : int
    """

    def __init__(self, resolutions=DEFAULT_RESOLUTIONS, bitrates=DEFAULT_BITRATES, r_max=2160,
                 q_min=10, q_max=50, n_estimators=400, max_depth=10, learning_rate=0.1,
                 cv_folds=5, random_state=0):
        self.resolutions = resolutions
        self.bitrates = bitrates
        self.r_max = r_max
        self.q_min = q_min
        self.q_max = q_max
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.cv_folds = cv_folds
        self.random_state = random_state

    @property
    def config(self) -> HullConfig:
        return HullConfig(tuple(self.resolutions), tuple(self.bitrates), self.r_max,
                          self.q_min, self.q_max)

    def fit(self, X, y=None):
        hp = {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
              "learning_rate": self.learning_rate}
        self.models_ = train_models(X, hp, self.random_state, self.q_min, self.q_max, self.cv_folds)
        return self

    @classmethod
    def from_models(cls, models: ModelSet, **params) -> "ConvexHullPredictor":
        est = cls(**params)
        est.models_ = models
        return est

    def predict(self, X) -> list:
        check_is_fitted(self, "models_")
        config = self.config
        if isinstance(X, SceneFeatures):
            X = [X]
        rows = [_features_array(x) for x in X] if not isinstance(X, np.ndarray) else list(np.atleast_2d(X))
        return [predict_ladder(row, config, self.models_) for row in rows]
