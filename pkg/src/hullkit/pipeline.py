"""End-to-end orchestration: dataset generation, ladder methods, evaluation, reports."""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .bd import BDError, RdCurve, bd_quality, bd_rate
from .complexity import FEATURE_NAMES, SceneFeatures, extract_scene_features
from .harness import EncodeHarness, EncoderSpec, MockEncoderParams, Scene
from .hull import (
    DEFAULT_FIXED_LADDER,
    HullConfig,
    LadderEntry,
    brute_force_hull,
    default_ladder,
    fixed_ladder,
    model_bounds,
    predict_ladder,
)
from .media_io import open_sequence
from .predictor import DATASET_COLUMNS, DEFAULT_HYPERPARAMS

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
DATASET_HEADER = ("scene_id",) + DATASET_COLUMNS + ("enc_time_s", "dec_time_s")
METRICS = ("BDR_P", "BDR_X", "BD_PSNR", "BD_XPSNR", "dT_E", "dT_D")


@dataclass
class PipelineConfig:
    """Everything a run needs besides the scenes themselves."""

    hull: HullConfig = field(default_factory=HullConfig)
    encoder: EncoderSpec | None = None
    mock: MockEncoderParams = field(default_factory=MockEncoderParams)
    fixed_ladder: dict = field(default_factory=lambda: dict(DEFAULT_FIXED_LADDER))
    hyperparams: dict = field(default_factory=lambda: dict(DEFAULT_HYPERPARAMS))
    cache_dir: str | None = None
    seed: int = 0
    jobs: int = 1
    r_max_values: tuple = (720, 1080, 2160)

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        d = dict(d or {})
        known = {"hull", "encoder", "mock", "fixed_ladder", "hyperparams", "cache_dir", "seed",
                 "jobs", "r_max_values"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        hull = HullConfig(**d["hull"]) if "hull" in d else HullConfig()
        return cls(
            hull=hull,
            encoder=EncoderSpec.from_dict(d["encoder"]) if d.get("encoder") else None,
            mock=MockEncoderParams.from_dict(d.get("mock", {})),
            fixed_ladder={float(k): int(v) for k, v in
                          d.get("fixed_ladder", DEFAULT_FIXED_LADDER).items()},
            hyperparams={**DEFAULT_HYPERPARAMS, **d.get("hyperparams", {})},
            cache_dir=d.get("cache_dir"),
            seed=int(d.get("seed", 0)),
            jobs=int(d.get("jobs", 1)),
            r_max_values=tuple(int(r) for r in d.get("r_max_values", (720, 1080, 2160))),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "hull": self.hull.to_dict(),
            "encoder": self.encoder.to_dict() if self.encoder else None,
            "mock": self.mock.to_dict(),
            "fixed_ladder": {f"{k:g}": v for k, v in sorted(self.fixed_ladder.items())},
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "r_max_values": list(self.r_max_values),
        }

    def harness(self, mock=None) -> EncodeHarness:
        spec = None if (mock or self.encoder is None) else self.encoder
        return EncodeHarness(spec, self.mock, self.cache_dir, self.jobs)


@dataclass
class SceneManifest:
    """Scenes (id, video path, frame range or precomputed features) plus optional config."""

    scenes: list
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"duplicate scene ids: {dup}")

    @classmethod
    def from_dict(cls, d, base_dir=None) -> "SceneManifest":
        scenes = []
        for entry in d.get("scenes", []):
            path = entry.get("path")
            if path is not None and base_dir is not None and not Path(path).is_absolute():
                path = str(Path(base_dir) / path)
            features = SceneFeatures.from_dict(entry["features"]) if "features" in entry else None
            if path is None and features is None:
                raise ValueError(f"scene {entry.get('scene_id')!r} needs a path or features")
            scenes.append(Scene(str(entry["scene_id"]), path, int(entry.get("start", 0)),
                                entry.get("stop"), features))
        return cls(scenes, dict(d.get("config", {})))

    @classmethod
    def load(cls, path) -> "SceneManifest":
        path = Path(path)
        manifest = cls.from_dict(json.loads(path.read_text()), path.parent)
        manifest.validate_ranges()
        return manifest

    def validate_ranges(self):
        for s in self.scenes:
            if s.path is None:
                continue
            n = len(open_sequence(s.path))
            stop = n if s.stop is None else int(s.stop)
            if not 0 <= s.start < stop <= n:
                raise ValueError(f"scene {s.scene_id}: frame range [{s.start}, {stop}) "
                                 f"outside the {n}-frame sequence")

    def to_dict(self) -> dict:
        out = []
        for s in self.scenes:
            e = {"scene_id": s.scene_id}
            if s.path is not None:
                e.update(path=s.path, start=s.start)
                if s.stop is not None:
                    e["stop"] = s.stop
            if s.features is not None:
                e["features"] = s.features.to_dict()
            out.append(e)
        return {"scenes": out, "config": self.config}


def scene_features(scene: Scene, jobs=1) -> SceneFeatures:
    if scene.features is None:
        scene.features = extract_scene_features(scene.frames(), n_jobs=jobs)
    return scene.features


# -- dataset ----------------------------------------------------------------

def dataset_cells(config: HullConfig, scene_index=0, per_scene=None, seed=0) -> list:
    """Cells to encode for one scene.

    ``per_scene=None`` gives the full grid. Otherwise both QP endpoints at
    every resolution are kept (the bitrate models need them) and the rest
    is a seeded sample of interior cells, ordered like the full grid.
    """
    cells = config.cells()
    if per_scene is None or per_scene >= len(cells):
        return cells
    ends = [c for c in cells if c[1] in (config.q_min, config.q_max)]
    if per_scene < len(ends):
        raise ValueError(f"per-scene sample of {per_scene} cannot hold the {len(ends)} endpoint cells")
    interior = [c for c in cells if c[1] not in (config.q_min, config.q_max)]
    rng = np.random.default_rng([seed, scene_index])
    pick = rng.choice(len(interior), per_scene - len(ends), replace=False)
    chosen = set(ends) | {interior[i] for i in pick}
    return [c for c in cells if c in chosen]


def generate_dataset(manifest: SceneManifest, config: PipelineConfig, harness=None,
                     per_scene=None, out=None):
    """One row per (scene, r, q) joining scene features and the RD point.

    Returns ``(frame, failures)``; failed cells are logged and skipped.
    """
    harness = harness or config.harness()
    rows, failures = [], []
    for i, scene in enumerate(manifest.scenes):
        feats = scene_features(scene, config.jobs)
        fvals = feats.to_dict()
        for r, q in dataset_cells(config.hull, i, per_scene, config.seed):
            try:
                p = harness.encode_point(scene, r, q)
            except Exception as exc:  # noqa: BLE001 - collected and reported
                logger.error("scene %s %dp qp%d failed: %s", scene.scene_id, r, q, exc)
                failures.append((scene.scene_id, r, q, str(exc)))
                continue
            row = {"scene_id": scene.scene_id}
            row.update({n: fvals[n] for n in FEATURE_NAMES})
            row.update(resolution=r, qp=q, bitrate_kbps=p.bitrate_kbps, psnr_db=p.psnr_db,
                       xpsnr_db=p.xpsnr_db, enc_time_s=p.enc_time_s, dec_time_s=p.dec_time_s)
            rows.append(row)
    df = pd.DataFrame(rows, columns=list(DATASET_HEADER))
    if out is not None:
        write_dataset(df, out)
    return df, failures


def write_dataset(df: pd.DataFrame, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")


# -- methods ----------------------------------------------------------------

@dataclass
class MethodResult:
    """Ladder and measured RD points of one method on one scene."""

    method: str
    scene_id: str
    ladder: list
    points: list
    enc_time_s: float
    dec_time_s: float

    def curve(self, metric: str) -> RdCurve:
        attr = "xpsnr_db" if metric == "xpsnr" else "psnr_db"
        return RdCurve.from_points([(p.bitrate_kbps, getattr(p, attr)) for p in self.points],
                                   label=self.method)


def _encode_ladder(harness, scene, method, ladder):
    points = [harness.encode_point(scene, e.resolution, e.qp, maxrate=e.target_bitrate)
              for e in ladder]
    for e, p in zip(ladder, points):
        e.achieved_bitrate = p.bitrate_kbps
        e.achieved_xpsnr = p.xpsnr_db
    return MethodResult(method, scene.scene_id, ladder, points,
                        sum(p.enc_time_s for p in points), sum(p.dec_time_s for p in points))


def source_height(scene: Scene, config: HullConfig) -> int:
    if scene.path is not None:
        h = scene.frames()[0].height
        if h in config.resolutions:
            return h
    return config.resolutions[-1]


def run_methods(scene: Scene, config: PipelineConfig, models, harness) -> list:
    """Default, FixedLadder, then Bruteforce and predicted ladders for every r_max."""
    feats = scene_features(scene, config.jobs)
    bounds = model_bounds(models, feats)
    hull = config.hull
    results = [
        _encode_ladder(harness, scene, "Default",
                       default_ladder(hull, bounds, source_height(scene, hull))),
        _encode_ladder(harness, scene, "FixedLadder", fixed_ladder(hull, config.fixed_ladder, bounds)),
    ]
    for r_max in config.r_max_values:
        capped = hull.replace(r_max=r_max)
        sweep = harness.exhaustive_sweep(scene, capped)
        ladder = brute_force_hull(sweep, capped)
        by_cell = {(p.resolution, p.qp): p for p in sweep}
        points = [by_cell[(e.resolution, e.qp)] for e in ladder]
        results.append(MethodResult(f"Bruteforce({r_max})", scene.scene_id, ladder, points,
                                    sum(p.enc_time_s for p in sweep),
                                    sum(p.dec_time_s for p in points)))
        results.append(_encode_ladder(harness, scene, f"Predicted({r_max})",
                                      predict_ladder(feats, capped, models)))
    return results


# -- evaluation -------------------------------------------------------------

def _pct(value, ref):
    return 100.0 * (value - ref) / ref if ref > 0 else 0.0


def compare(reference: MethodResult, test: MethodResult) -> dict:
    """BD metrics and timing deltas of ``test`` against ``reference``."""
    return {
        "BDR_P": bd_rate(reference.curve("psnr"), test.curve("psnr")),
        "BDR_X": bd_rate(reference.curve("xpsnr"), test.curve("xpsnr")),
        "BD_PSNR": bd_quality(reference.curve("psnr"), test.curve("psnr")),
        "BD_XPSNR": bd_quality(reference.curve("xpsnr"), test.curve("xpsnr")),
        "dT_E": _pct(test.enc_time_s, reference.enc_time_s),
        "dT_D": _pct(test.dec_time_s, reference.dec_time_s),
    }


@dataclass
class EvaluationReport:
    """Per-method averages against Default plus per-scene rows and RD curves."""

    methods: list
    scenes: list
    curves: list
    config: dict = field(default_factory=dict)

    def summary(self, method) -> dict:
        for m in self.methods:
            if m["method"] == method:
                return m
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION,
                "timing_definition": "per-scene total-time ratio vs Default, averaged over scenes",
                "config": self.config, "methods": self.methods, "scenes": self.scenes}


def evaluate(manifest: SceneManifest, config: PipelineConfig, models, harness=None) -> EvaluationReport:
    """Run every method on every scene and average BD/timing deltas vs Default.

    Scenes whose curves cannot support a BD computation (fewer than four
    Pareto points, no overlap) are excluded from that method's average.
    """
    harness = harness or config.harness()
    per_scene, curves = [], []
    order = []
    for scene in manifest.scenes:
        results = run_methods(scene, config, models, harness)
        ref = results[0]
        for res in results:
            if res.method not in order:
                order.append(res.method)
            row = {"method": res.method, "scene_id": scene.scene_id, "excluded": False}
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    row.update(compare(ref, res))
            except BDError as exc:
                logger.warning("scene %s excluded for %s: %s", scene.scene_id, res.method, exc)
                row.update({k: None for k in METRICS}, excluded=True, reason=str(exc))
            per_scene.append(row)
            for e, p in zip(res.ladder, res.points):
                curves.append({"method": res.method, "scene_id": scene.scene_id,
                               "target_kbps": e.target_bitrate, "height": e.resolution, "qp": e.qp,
                               "bitrate_kbps": p.bitrate_kbps, "psnr_db": p.psnr_db,
                               "xpsnr_db": p.xpsnr_db, "enc_time_s": p.enc_time_s,
                               "dec_time_s": p.dec_time_s})
    methods = []
    for name in order:
        rows = [r for r in per_scene if r["method"] == name]
        kept = [r for r in rows if not r["excluded"]]
        summary = {"method": name, "n_scenes": len(kept), "n_excluded": len(rows) - len(kept)}
        for k in METRICS:
            summary[k] = float(np.mean([r[k] for r in kept])) if kept else None
        methods.append(summary)
    return EvaluationReport(methods, per_scene, curves, config.to_dict())


def _schema():
    return json.loads(resources.files("hullkit").joinpath("schemas/report.schema.json").read_text())


def report_schema() -> dict:
    return _schema()


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                        for k in columns})


def write_report(report: EvaluationReport, directory, prefix="report") -> dict:
    """``<prefix>.json``, ``<prefix>.csv`` (methods x scenes) and ``<prefix>_curves.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"json": directory / f"{prefix}.json", "csv": directory / f"{prefix}.csv",
             "curves": directory / f"{prefix}_curves.csv"}
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_csv(paths["csv"], report.scenes, ["method", "scene_id", "excluded", *METRICS])
    _write_csv(paths["curves"], report.curves,
               ["method", "scene_id", "target_kbps", "height", "qp", "bitrate_kbps", "psnr_db",
                "xpsnr_db", "enc_time_s", "dec_time_s"])
    return paths


def ladders_to_json(ladders: dict) -> str:
    """``{scene_id: [entry, ...]}`` as stable JSON text."""
    return json.dumps({k: [e.to_dict() for e in v] for k, v in ladders.items()},
                      indent=2, sort_keys=True) + "\n"


def ladders_from_json(text) -> dict:
    return {k: [LadderEntry.from_dict(e) for e in v] for k, v in json.loads(text).items()}


# -- latency probe ----------------------------------------------------------

def preprocess_latency_probe(frames, models, config: HullConfig | None = None, repeats=5) -> dict:
    """Median feature throughput (frames/s) and per-target ladder prediction latency (ms)."""
    config = config or HullConfig()
    frames = list(frames)
    extract_scene_features(frames[:2])  # warm-up
    fps_runs, ms_runs = [], []
    feats = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        feats = extract_scene_features(frames)
        fps_runs.append(len(frames) / (time.perf_counter() - t0))
    predict_ladder(feats, config, models)
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict_ladder(feats, config, models)
        ms_runs.append(1000.0 * (time.perf_counter() - t0) / len(config.bitrates))
    return {
        "frames": len(frames), "width": frames[0].width, "height": frames[0].height,
        "feature_fps": statistics.median(fps_runs), "feature_fps_runs": fps_runs,
        "feature_fps_stdev": statistics.stdev(fps_runs) if len(fps_runs) > 1 else 0.0,
        "predict_ms": statistics.median(ms_runs), "predict_ms_runs": ms_runs,
        "predict_ms_stdev": statistics.stdev(ms_runs) if len(ms_runs) > 1 else 0.0,
    }
