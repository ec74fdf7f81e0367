"""Per-title bitrate ladders from XPSNR prediction.

Scene complexity features feed boosted-tree models that predict XPSNR and
the bitrate range of an encode; the ladder picks, for every target bitrate,
the resolution with the highest predicted XPSNR and a QP interpolated in
log-bitrate. Exhaustive (brute-force) hulls, BD metrics and an encode
harness with a mock encoder are included for evaluation.
"""

__version__ = "0.1.0"

from .bd import RdCurve, bd_quality, bd_rate, pareto_clean
from .complexity import ComplexityFeatureExtractor, SceneFeatures, extract_scene_features
from .harness import EncodeHarness, EncoderSpec, MockEncoderParams, RdPoint, Scene, mock_encode
from .hull import ConvexHullPredictor, HullConfig, LadderEntry, brute_force_hull, predict_ladder
from .media_io import FrameBuffer, Geometry, open_sequence, read_sequence, write_sequence
from .predictor import ModelSet, interpolate_qp, load_model, predict_xpsnr, save_model, train
from .quality import block_grid, frame_xpsnr, sequence_psnr, sequence_xpsnr
from .resample import BicubicResampler, ResampleSpec, resample

__all__ = [
    "BicubicResampler", "ComplexityFeatureExtractor", "ConvexHullPredictor", "EncodeHarness",
    "EncoderSpec", "FrameBuffer", "Geometry", "HullConfig", "LadderEntry", "MockEncoderParams",
    "ModelSet", "RdCurve", "RdPoint", "ResampleSpec", "Scene", "SceneFeatures", "bd_quality",
    "bd_rate", "block_grid", "brute_force_hull", "extract_scene_features", "frame_xpsnr",
    "interpolate_qp", "load_model", "mock_encode", "open_sequence", "pareto_clean",
    "predict_ladder", "predict_xpsnr", "read_sequence", "resample", "save_model",
    "sequence_psnr", "sequence_xpsnr", "train", "write_sequence",
]
