"""Command-line entry point: ``hullkit <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bd import BDError, RdCurve, bd_log_rate, bd_quality, bd_rate
from .complexity import SceneFeatures, extract_scene_features, frame_features
from .hull import HullConfig, predict_ladder
from .media_io import Geometry, MediaFormatError, parse_fps, read_sequence, write_sequence
from .pipeline import (
    PipelineConfig,
    SceneManifest,
    evaluate,
    generate_dataset,
    ladders_to_json,
    preprocess_latency_probe,
    write_report,
)
from .predictor import KINDS, ModelFormatError, ModelSet, load_dataset, save_model, train
from .quality import frame_scores
from .resample import ResampleSpec, resample
from .synthetic import noise_frames, write_synthetic_scenes

logger = logging.getLogger("hullkit")


class CliError(Exception):
    pass


def _geometry(args) -> Geometry | None:
    if args.width is None and args.height is None:
        return None
    if args.width is None or args.height is None:
        raise CliError("raw input needs both --width and --height")
    return Geometry(args.width, args.height, args.bitdepth, parse_fps(args.fps))


def _read(path, args, start=0, stop=None):
    return read_sequence(path, _geometry(args), start, stop)


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.jobs is not None:
        config.jobs = args.jobs
    if getattr(args, "cache", None):
        config.cache_dir = args.cache
    return config


def _harness(args, config):
    if config.encoder is None and not args.mock:
        logger.info("no encoder configured; using the mock encoder")
    return config.harness(mock=args.mock)


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _hull_config(args, config: PipelineConfig) -> HullConfig:
    hull = config.hull
    if getattr(args, "rmax", None):
        hull = hull.replace(r_max=args.rmax)
    return hull


# -- commands ---------------------------------------------------------------

def cmd_features(args):
    frames = _read(args.input, args)
    feats = extract_scene_features(frames, n_jobs=args.jobs or 1)
    if args.per_frame:
        rows = frame_features(frames)
        with open(args.per_frame, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    _emit(_dump(feats.to_dict()), args.out)


def cmd_xpsnr(args):
    ref = _read(args.reference, args)
    dist = _read(args.distorted, args)
    records = frame_scores(ref, dist, with_blocks=bool(args.dump_blocks))
    if args.dump_blocks:
        with open(args.dump_blocks, "w", newline="") as fh:
            w = None
            for rec in records:
                for row in rec["blocks"].rows(rec["frame"]):
                    if w is None:
                        w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                        w.writeheader()
                    w.writerow(row)
    result = {
        "frames": len(records),
        "xpsnr_db": sum(r["xpsnr"] for r in records) / len(records),
        "psnr_db": sum(r["psnr"] for r in records) / len(records),
        "per_frame": [{"frame": r["frame"], "xpsnr_db": r["xpsnr"], "psnr_db": r["psnr"]}
                      for r in records],
    }
    _emit(_dump(result), args.out)


def _read_curve(path, metric) -> RdCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"{path}: no rows")
    qcol = next((c for c in (f"{metric}_db", metric, "quality") if c in rows[0]), None)
    rcol = next((c for c in ("bitrate_kbps", "bitrate", "rate") if c in rows[0]), None)
    if qcol is None or rcol is None:
        raise CliError(f"{path}: need a bitrate column and a {metric} column")
    return RdCurve.from_points([(float(r[rcol]), float(r[qcol])) for r in rows], label=str(path))


def cmd_bd(args):
    ref = _read_curve(args.ref, args.metric)
    test = _read_curve(args.test, args.metric)
    result = {
        "metric": args.metric,
        "bd_rate_pct": bd_rate(ref, test),
        "bd_log_rate": bd_log_rate(ref, test),
        "bd_quality_db": bd_quality(ref, test),
    }
    _emit(_dump(result), args.out)


def cmd_resample(args):
    try:
        w, h = (int(v) for v in args.size.lower().split("x"))
    except ValueError as exc:
        raise CliError(f"--size must look like WIDTHxHEIGHT, got {args.size!r}") from exc
    spec = ResampleSpec(w, h, args.kernel_a)
    frames = [resample(f, spec) for f in _read(args.input, args)]
    write_sequence(frames, args.output)


def cmd_synth(args):
    out = Path(args.out)
    entries = write_synthetic_scenes(out / "scenes", args.scenes, args.seed or 0,
                                     width=args.synth_width, height=args.synth_height,
                                     n_frames=args.frames)
    for e in entries:
        e["path"] = str(Path(e["path"]).relative_to(out))
    (out / "manifest.json").write_text(_dump({"scenes": entries}))
    print(out / "manifest.json")


def cmd_dataset(args):
    config = _load_config(args)
    manifest = SceneManifest.load(args.manifest)
    df, failures = generate_dataset(manifest, config, _harness(args, config),
                                    per_scene=args.per_scene, out=args.out)
    logger.info("wrote %d rows to %s", len(df), args.out)
    if failures:
        logger.error("%d cell(s) failed; rerun to resume from the cache", len(failures))
        return 1
    return 0


def cmd_train(args):
    config = _load_config(args)
    df = load_dataset(args.dataset)
    hull = config.hull
    kinds = KINDS if args.kind == "all" else (args.kind,)
    models = {k: train(df, k, config.hyperparams, config.seed, hull.q_min, hull.q_max, args.cv_folds)
              for k in kinds}
    if args.kind == "all":
        ModelSet(**models).save(args.out)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_model(models[args.kind], args.out)
    for k, m in models.items():
        logger.info("%s: CV MAE %s", k, m.training_meta.get("cv_mae_mean"))


def _load_features(path) -> dict:
    d = json.loads(Path(path).read_text())
    if "E_Y" in d:
        return {Path(path).stem: SceneFeatures.from_dict(d)}
    return {k: SceneFeatures.from_dict(v) for k, v in d.items()}


def cmd_ladder(args):
    config = _load_config(args)
    models = ModelSet.load(args.models)
    hull = _hull_config(args, config)
    feats = _load_features(args.features)
    ladders = {k: predict_ladder(f, hull, models) for k, f in feats.items()}
    if len(ladders) == 1:
        (only,) = ladders.values()
        _emit(_dump([e.to_dict() for e in only]), args.out)
    else:
        _emit(ladders_to_json(ladders), args.out)


def cmd_evaluate(args):
    config = _load_config(args)
    manifest = SceneManifest.load(args.manifest)
    models = ModelSet.load(args.models)
    report = evaluate(manifest, config, models, _harness(args, config))
    paths = write_report(report, args.out)
    for m in report.methods:
        logger.info("%-18s BDR_X %8.2f %%  BD-XPSNR %6.2f dB  dT_E %8.2f %%", m["method"],
                    m["BDR_X"] or 0.0, m["BD_XPSNR"] or 0.0, m["dT_E"] or 0.0)
    print(paths["json"])


def cmd_probe(args):
    config = _load_config(args)
    models = ModelSet.load(args.models)
    if args.input:
        frames = _read(args.input, args, 0, args.frames)
    else:
        frames = noise_frames(args.seed or 0, 3840, 2160, args.frames)
    result = preprocess_latency_probe(frames, models, config.hull, args.repeats)
    _emit(_dump(result), args.out)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hullkit", description="Per-title bitrate ladder toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="pipeline config JSON (hull, encoder, mock, fixed_ladder)")
    p.add_argument("--jobs", type=int, help="parallel jobs for sweeps and feature extraction")
    p.add_argument("--seed", type=int, help="random seed (training, sampling)")
    p.add_argument("--mock", action="store_true", help="use the analytic mock encoder")
    p.add_argument("-v", "--verbose", action="count", default=0)

    media = argparse.ArgumentParser(add_help=False)
    media.add_argument("--width", type=int, help="raw YUV width")
    media.add_argument("--height", type=int, help="raw YUV height")
    media.add_argument("--bitdepth", type=int, default=8, choices=(8, 10))
    media.add_argument("--fps", default="30", help="raw YUV frame rate (e.g. 30 or 30000/1001)")
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", "-o", help="output file (default: stdout)")

    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("features", parents=[media, out], help="scene complexity features")
    s.add_argument("input")
    s.add_argument("--per-frame", help="also write per-frame features as CSV")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("xpsnr", parents=[media, out], help="XPSNR and PSNR of a distorted sequence")
    s.add_argument("reference")
    s.add_argument("distorted")
    s.add_argument("--dump-blocks", help="write per-block activity/weight/SSE CSV")
    s.set_defaults(func=cmd_xpsnr)

    s = sub.add_parser("bd", parents=[out], help="Bjontegaard deltas between two RD curve CSVs")
    s.add_argument("--ref", required=True, help="reference curve CSV (bitrate_kbps,psnr_db,xpsnr_db)")
    s.add_argument("--test", required=True, help="test curve CSV")
    s.add_argument("--metric", default="xpsnr", choices=("xpsnr", "psnr"))
    s.set_defaults(func=cmd_bd)

    s = sub.add_parser("resample", parents=[media], help="bicubic resize of a sequence")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--size", required=True, help="WIDTHxHEIGHT")
    s.add_argument("--kernel-a", type=float, default=-0.5)
    s.set_defaults(func=cmd_resample)

    s = sub.add_parser("synth", help="write seeded synthetic scenes and a manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--scenes", type=int, default=10)
    s.add_argument("--frames", type=int, default=4)
    s.add_argument("--synth-width", type=int, default=160)
    s.add_argument("--synth-height", type=int, default=96)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("dataset", help="encode scenes and write the RD dataset CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--per-scene", type=int, help="sample this many cells per scene")
    s.add_argument("--cache", help="result cache directory")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", help="train prediction models")
    s.add_argument("--dataset", required=True)
    s.add_argument("--kind", default="all", choices=KINDS + ("all",))
    s.add_argument("--out", required=True, help="model file, or directory for --kind all")
    s.add_argument("--cv-folds", type=int, default=5)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("ladder", parents=[out], help="predict a ladder from scene features")
    s.add_argument("--features", required=True)
    s.add_argument("--models", required=True, help="directory holding the three model files")
    s.add_argument("--rmax", type=int)
    s.set_defaults(func=cmd_ladder)

    s = sub.add_parser("evaluate", help="compare ladder methods against Default")
    s.add_argument("--manifest", required=True)
    s.add_argument("--models", required=True)
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--cache", help="result cache directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("probe", parents=[media, out], help="feature throughput and prediction latency")
    s.add_argument("--models", required=True)
    s.add_argument("--input", help="sequence to time (default: random 2160p frames)")
    s.add_argument("--frames", type=int, default=8)
    s.add_argument("--repeats", type=int, default=5)
    s.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return int(args.func(args) or 0)
    except (CliError, MediaFormatError, ModelFormatError, BDError, ValueError, OSError) as exc:
        print(f"hullkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
