"""mmdrive: FMCW mmWave driver-activity sensing toolkit.

Synthetic cabin-radar measurements, range/noise/doppler feature extraction,
a TLV wire format, IMU bump gating, a fused two-stage CNN trained from
scratch, a random-forest baseline, and a full evaluation harness.
"""

__version__ = "0.1.0"

from .activities import DANGEROUS_LABELS, ActivityLabel
from .dsp import RadarFrame, doppler_fft, extract_features, range_fft
from .frameio import (DatasetRecord, ImuSample, StreamDecoder, decode_frame,
                      encode_frame, read_jsonl, write_jsonl)
from .models import (CallCounters, ModelBundle, TrainingConfig, Verdict,
                     VerdictKind, build_bundle, infer, load_bundle,
                     save_bundle, train_ddb, train_dvn)
from .preprocess import (NormStats, StackedSample, apply_norm, detect_bumps,
                         fit_norm, gate_frames, stack_frames)
from .radar import DEFAULT_CONFIG, RadarConfig
from .simulate import (RawCube, Reflector, Scene, make_scene, simulate_drive,
                       synthesize_frame)

__all__ = [
    "ActivityLabel",
    "CallCounters",
    "DANGEROUS_LABELS",
    "DEFAULT_CONFIG",
    "DatasetRecord",
    "ImuSample",
    "ModelBundle",
    "NormStats",
    "RadarConfig",
    "RadarFrame",
    "RawCube",
    "Reflector",
    "Scene",
    "StackedSample",
    "StreamDecoder",
    "TrainingConfig",
    "Verdict",
    "VerdictKind",
    "apply_norm",
    "build_bundle",
    "decode_frame",
    "detect_bumps",
    "doppler_fft",
    "encode_frame",
    "extract_features",
    "fit_norm",
    "gate_frames",
    "infer",
    "load_bundle",
    "make_scene",
    "range_fft",
    "read_jsonl",
    "save_bundle",
    "simulate_drive",
    "stack_frames",
    "synthesize_frame",
    "train_ddb",
    "train_dvn",
    "write_jsonl",
]
