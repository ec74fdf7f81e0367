"""XPSNR and bitrate-bound regressors plus log-domain QP interpolation.

Three models are trained per dataset:

* ``xpsnr``: features + bitrate + normalized height -> XPSNR (dB)
* ``bitrate_qmin`` / ``bitrate_qmax``: features + normalized height ->
  log10(bitrate) of encodes at the lowest / highest QP.

The QP for a target bitrate is then interpolated linearly in log-bitrate
between the two predicted anchors ``(q_min, b_max)`` and ``(q_max, b_min)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import GroupKFold

from .complexity import FEATURE_NAMES
from .trees import GradientBoostedRegressor
from .utils.validation import check_feature_matrix

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
REFERENCE_HEIGHT = 2160
XPSNR_FEATURES = FEATURE_NAMES + ("b", "r_norm")
BITRATE_FEATURES = FEATURE_NAMES + ("r_norm",)
KINDS = ("xpsnr", "bitrate_qmin", "bitrate_qmax")
DATASET_COLUMNS = FEATURE_NAMES + ("resolution", "qp", "bitrate_kbps", "psnr_db", "xpsnr_db")
DEFAULT_HYPERPARAMS = {"n_estimators": 400, "max_depth": 10, "learning_rate": 0.1}
MIN_TRAINING_SAMPLES = 100


class ModelFormatError(ValueError):
    """Raised for unreadable or incompatible model files."""


class DegenerateBoundsWarning(UserWarning):
    """Predicted bitrate bounds were inverted or equal."""


def feature_order(kind: str) -> tuple:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return XPSNR_FEATURES if kind == "xpsnr" else BITRATE_FEATURES


def normalized_height(resolution) -> np.ndarray | float:
    return np.asarray(resolution, dtype=np.float64) / REFERENCE_HEIGHT


@dataclass
class PredictionModel:
    kind: str
    regressor: GradientBoostedRegressor
    feature_order: tuple = ()
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = feature_order(self.kind)
        if not self.feature_order:
            self.feature_order = expected
        if tuple(self.feature_order) != expected:
            raise ModelFormatError(
                f"feature order {tuple(self.feature_order)} does not match {expected} for {self.kind}")
        self.feature_order = tuple(self.feature_order)

    def predict(self, X) -> np.ndarray:
        return self.regressor.predict(check_feature_matrix(X, len(self.feature_order)))


def _as_matrix(model, features) -> np.ndarray:
    """Accept a mapping / list of mappings keyed by feature name, or an array."""
    order = model.feature_order
    if isinstance(features, dict):
        features = [features]
    if isinstance(features, (list, tuple)) and features and isinstance(features[0], dict):
        missing = [n for n in order if n not in features[0]]
        if missing:
            raise ValueError(f"features missing {missing} for a {model.kind} model")
        return np.array([[float(f[n]) for n in order] for f in features])
    return check_feature_matrix(features, len(order))


def predict_xpsnr(model, features):
    """Predicted XPSNR (dB); scalar for a single vector, array for a batch."""
    if model.kind != "xpsnr":
        raise ValueError(f"expected an xpsnr model, got {model.kind}")
    X = _as_matrix(model, features)
    out = np.asarray(model.predict(X), dtype=np.float64)
    return float(out[0]) if _is_single(features) else out


def _is_single(features) -> bool:
    if isinstance(features, dict):
        return True
    if isinstance(features, (list, tuple)) and features and isinstance(features[0], dict):
        return False
    return np.ndim(features) == 1


def predict_bitrate_bounds(model_qmin, model_qmax, features):
    """``(b_max, b_min)`` in kbps from the q_min and q_max bitrate models."""
    if model_qmin.kind != "bitrate_qmin" or model_qmax.kind != "bitrate_qmax":
        raise ValueError("expected (bitrate_qmin, bitrate_qmax) models")
    X = _as_matrix(model_qmin, features)
    b_max = 10.0 ** np.asarray(model_qmin.predict(X), dtype=np.float64)
    b_min = 10.0 ** np.asarray(model_qmax.predict(X), dtype=np.float64)
    if not (np.all(np.isfinite(b_max)) and np.all(np.isfinite(b_min))):
        raise ValueError("bitrate models produced non-finite predictions")
    inverted = b_max < b_min
    if np.any(inverted):
        warnings.warn("predicted bitrate bounds inverted; swapping", DegenerateBoundsWarning,
                      stacklevel=2)
        b_max, b_min = np.where(inverted, b_min, b_max), np.where(inverted, b_max, b_min)
    if np.any(b_max == b_min):
        warnings.warn("predicted bitrate bounds coincide; QP range is degenerate",
                      DegenerateBoundsWarning, stacklevel=2)
    if _is_single(features):
        return float(b_max[0]), float(b_min[0])
    return b_max, b_min


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def interpolate_qp(q_min, q_max, b_min, b_max, b, strict=False) -> int:
    """Integer QP for target bitrate ``b``, linear in log10(bitrate).

    Anchors are ``(b_max -> q_min)`` and ``(b_min -> q_max)``; the result is
    clamped to ``[q_min, q_max]`` and rounded half away from zero. Inverted
    bounds are swapped with a warning (or rejected when ``strict``); equal
    bounds give the midpoint QP.
    """
    if q_min >= q_max:
        raise ValueError("q_min must be below q_max")
    if not (b > 0 and b_min > 0 and b_max > 0):
        raise ValueError("bitrates must be positive")
    if b_min >= b_max:
        if strict:
            raise ValueError(f"b_min ({b_min}) must be below b_max ({b_max})")
        if b_min == b_max:
            warnings.warn("equal bitrate bounds; using the midpoint QP", DegenerateBoundsWarning,
                          stacklevel=2)
            return round_half_away((q_min + q_max) / 2)
        warnings.warn("inverted bitrate bounds; swapping", DegenerateBoundsWarning, stacklevel=2)
        b_min, b_max = b_max, b_min
    lmax, lmin = math.log10(b_max), math.log10(b_min)
    q = q_min + (q_max - q_min) * (math.log10(b) - lmax) / (lmin - lmax)
    q = min(max(q, q_min), q_max)
    return round_half_away(q)


# -- datasets ---------------------------------------------------------------

def load_dataset(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"scene_id": str}, float_precision="round_trip")
    missing = [c for c in ("scene_id",) + DATASET_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: dataset lacks columns {missing}")
    return df


def dataset_digest(df: pd.DataFrame) -> str:
    cols = [c for c in ("scene_id",) + DATASET_COLUMNS if c in df.columns]
    payload = df[cols].to_csv(index=False, float_format="%.17g").encode()
    return hashlib.sha256(payload).hexdigest()


def training_matrix(df: pd.DataFrame, kind: str, q_min=10, q_max=50):
    """``(X, y, groups)`` for one model kind; bitrate models use log10 targets."""
    order = feature_order(kind)
    if kind == "xpsnr":
        sub = df
        b = sub["bitrate_kbps"].to_numpy(float)
        target = sub["xpsnr_db"].to_numpy(float)
        extra = [b]
    else:
        q = q_min if kind == "bitrate_qmin" else q_max
        sub = df[df["qp"] == q]
        target = np.log10(sub["bitrate_kbps"].to_numpy(float))
        extra = []
    cols = [sub[n].to_numpy(float) for n in FEATURE_NAMES] + extra
    cols.append(normalized_height(sub["resolution"].to_numpy(float)))
    X = np.column_stack(cols) if len(sub) else np.empty((0, len(order)))
    return X, target, sub["scene_id"].astype(str).to_numpy()


def _check_training_data(X, y):
    if len(y) < MIN_TRAINING_SAMPLES:
        raise ValueError(f"need at least {MIN_TRAINING_SAMPLES} samples, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise ValueError("training targets must be finite")
    if np.all(np.ptp(X, axis=0) == 0):
        raise ValueError("degenerate dataset: every feature is constant")


def scene_folds(groups, n_splits=5):
    """Scene-disjoint train/test index pairs (deterministic)."""
    n_groups = len(np.unique(groups))
    if n_groups < 2:
        raise ValueError("cross-validation needs at least two scenes")
    k = min(n_splits, n_groups)
    return list(GroupKFold(n_splits=k).split(np.zeros(len(groups)), groups=groups))


def make_regressor(hyperparams=None, seed=0) -> GradientBoostedRegressor:
    params = dict(DEFAULT_HYPERPARAMS)
    params.update(hyperparams or {})
    params.setdefault("random_state", seed)
    return GradientBoostedRegressor(**params)


def train(samples, kind, hyperparams=None, seed=0, q_min=10, q_max=50, cv_folds=5) -> PredictionModel:
    """Fit one model; ``training_meta`` records the scene-disjoint CV MAE.

    ``samples`` is a dataset frame (see :data:`DATASET_COLUMNS`) or a
    ``(X, y, groups)`` triple already in the kind's feature order.
    """
    if isinstance(samples, pd.DataFrame):
        X, y, groups = training_matrix(samples, kind, q_min, q_max)
        digest = dataset_digest(samples)
    else:
        X, y, groups = samples
        X = check_feature_matrix(X, len(feature_order(kind)))
        y = np.asarray(y, dtype=np.float64)
        groups = np.asarray(groups).astype(str)
        digest = hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest()
    _check_training_data(X, y)

    fold_mae = []
    if cv_folds and cv_folds > 1:
        for train_idx, test_idx in scene_folds(groups, cv_folds):
            reg = make_regressor(hyperparams, seed).fit(X[train_idx], y[train_idx])
            fold_mae.append(float(np.mean(np.abs(reg.predict(X[test_idx]) - y[test_idx]))))
    regressor = make_regressor(hyperparams, seed).fit(X, y)
    meta = {
        "dataset_sha256": digest,
        "n_samples": int(len(y)),
        "n_scenes": int(len(np.unique(groups))),
        "seed": seed,
        "target": "xpsnr_db" if kind == "xpsnr" else "log10_bitrate_kbps",
        "cv_folds": len(fold_mae),
        "cv_mae": fold_mae,
        "cv_mae_mean": float(np.mean(fold_mae)) if fold_mae else None,
    }
    if kind != "xpsnr":
        meta["qp"] = q_min if kind == "bitrate_qmin" else q_max
    logger.info("trained %s model on %d samples (CV MAE %s)", kind, len(y), meta["cv_mae_mean"])
    return PredictionModel(kind, regressor, feature_order(kind), meta)


# -- serialization ----------------------------------------------------------

def model_to_dict(model: PredictionModel) -> dict:
    state = model.regressor.to_dict()
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "feature_order": list(model.feature_order),
        "learning_rate": model.regressor.learning_rate,
        "base_score": state["base_score"],
        "hyperparams": state["params"],
        "trees": state["trees"],
        "training_meta": model.training_meta,
    }


def model_from_dict(d: dict) -> PredictionModel:
    try:
        version = str(d["schema_version"])
        major = int(version.split(".")[0])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError("model file lacks a valid schema_version") from exc
    if major != int(SCHEMA_VERSION.split(".")[0]):
        raise ModelFormatError(f"unsupported model schema version {version}")
    try:
        order = tuple(d["feature_order"])
        reg = GradientBoostedRegressor.from_dict({
            "params": d.get("hyperparams", {}),
            "n_features": len(order),
            "base_score": d["base_score"],
            "trees": d["trees"],
        })
        return PredictionModel(d["kind"], reg, order, d.get("training_meta", {}))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupted model file: {exc}") from exc


def save_model(model: PredictionModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), separators=(",", ":")))
    return path


def load_model(path) -> PredictionModel:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a JSON model file ({exc})") from exc
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: model file must hold a JSON object")
    return model_from_dict(d)


@dataclass
class ModelSet:
    """The three models a ladder prediction needs."""

    xpsnr: object
    bitrate_qmin: object
    bitrate_qmax: object

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for kind in KINDS:
            save_model(getattr(self, kind), directory / f"{kind}.json")
        return directory

    @classmethod
    def load(cls, directory) -> "ModelSet":
        directory = Path(directory)
        return cls(*(load_model(directory / f"{kind}.json") for kind in KINDS))


def train_models(df, hyperparams=None, seed=0, q_min=10, q_max=50, cv_folds=5) -> ModelSet:
    return ModelSet(*(train(df, kind, hyperparams, seed, q_min, q_max, cv_folds) for kind in KINDS))


def cross_validate(df: pd.DataFrame, hyperparams=None, seed=0, q_min=10, q_max=50, n_splits=5):
    """Scene-disjoint CV of the XPSNR model and of the end-to-end QP pipeline.

    For every held-out row the QP is re-derived from its measured bitrate
    through the predicted bounds; the QP error is compared to the row's QP.
    Returns per-fold MAEs and the pooled absolute errors.
    """
    groups = df["scene_id"].astype(str).to_numpy()
    folds = scene_folds(groups, n_splits)
    xpsnr_mae, qp_mae = [], []
    x_err, q_err = [], []
    for train_idx, test_idx in folds:
        train_df, test_df = df.iloc[train_idx], df.iloc[test_idx]
        models = train_models(train_df, hyperparams, seed, q_min, q_max, cv_folds=0)
        X, y, _ = training_matrix(test_df, "xpsnr", q_min, q_max)
        e = np.abs(predict_xpsnr(models.xpsnr, X) - y)
        X_b = np.column_stack([test_df[n].to_numpy(float) for n in FEATURE_NAMES]
                              + [normalized_height(test_df["resolution"].to_numpy(float))])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBoundsWarning)
            b_max, b_min = predict_bitrate_bounds(models.bitrate_qmin, models.bitrate_qmax, X_b)
            q_hat = np.array([interpolate_qp(q_min, q_max, lo, hi, b) for lo, hi, b in
                              zip(b_min, b_max, test_df["bitrate_kbps"].to_numpy(float))])
        qe = np.abs(q_hat - test_df["qp"].to_numpy(float))
        xpsnr_mae.append(float(e.mean()))
        qp_mae.append(float(qe.mean()))
        x_err.append(e)
        q_err.append(qe)
    x_err, q_err = np.concatenate(x_err), np.concatenate(q_err)
    return {
        "xpsnr_mae_folds": xpsnr_mae, "xpsnr_mae": float(x_err.mean()),
        "xpsnr_err_std": float(x_err.std()),
        "qp_mae_folds": qp_mae, "qp_mae": float(q_err.mean()), "qp_err_std": float(q_err.std()),
    }
