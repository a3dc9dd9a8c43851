"""End-to-end plumbing: drives to frames to splits to trained bundles.

Recording segments are contiguous same-label frame runs (time gaps from bump
gating also split them). The split happens at segment level before stacking,
so training windows can overlap densely (stride 1) while evaluation windows
stay non-overlapping without any window-level leakage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activities import ActivityLabel
from .dsp import RadarFrame, process_drive
from .evaluate import SplitResult, SplitSpec, split
from .frameio import DatasetRecord, ImuSample, frame_from_record
from .models import ModelBundle, TrainingConfig, build_bundle, train_ddb, train_dvn
from .preprocess import (StackedSample, apply_norm, detect_bumps, fit_norm,
                         gate_indexed, stack_frames)
from .radar import RadarConfig
from .simulate import simulate_drive


def records_to_frames(records: list[DatasetRecord]
                      ) -> tuple[list[RadarFrame], list[ActivityLabel | None], list[ImuSample]]:
    """Unpack dataset records into frames, labels and the embedded IMU trace."""
    frames = [frame_from_record(r, i) for i, r in enumerate(records)]
    labels = [r.label for r in records]
    imu = [ImuSample(timestamp=r.timestamp, accel_z=r.imu_z) for r in records]
    return frames, labels, imu


def segment_frames(frames: list[RadarFrame],
                   labels: list[ActivityLabel]) -> list[list[int]]:
    """Contiguous same-label runs; a time gap or label change starts a new one."""
    if not frames:
        return []
    ts = np.array([f.timestamp for f in frames])
    diffs = np.diff(ts)
    positive = diffs[diffs > 0]
    nominal = float(positive.min()) if positive.size else 0.0
    segments = [[0]]
    for i in range(1, len(frames)):
        gap = nominal > 0 and (ts[i] - ts[i - 1]) > 1.5 * nominal
        if gap or labels[i] != labels[i - 1]:
            segments.append([i])
        else:
            segments[-1].append(i)
    return segments


@dataclass
class PreparedData:
    """Split, stacked and normalised samples plus their segment ids."""

    train: list[StackedSample]
    val: list[StackedSample]
    test: list[StackedSample]
    train_segments: list[int]
    val_segments: list[int]
    test_segments: list[int]
    norm_stats: object
    split_result: SplitResult


def prepare_samples(frames: list[RadarFrame], labels: list[ActivityLabel],
                    imu: list[ImuSample] | None = None,
                    window: int = 10, train_stride: int = 1,
                    eval_stride: int | None = None,
                    split_spec: SplitSpec | None = None,
                    bump_k: float = 5.0) -> PreparedData:
    """Gate, segment, split, stack and normalise one labelled frame stream."""
    split_spec = split_spec or SplitSpec()
    eval_stride = eval_stride or window
    if imu:
        bumps = detect_bumps(imu, k=bump_k)
        frames, labels = gate_indexed(frames, labels, bumps)
    segments = segment_frames(frames, labels)
    segment_labels = [labels[idx[0]] for idx in segments]
    assignment = split(segments, list(range(len(segments))), split_spec,
                       stratify_by=segment_labels)

    def stack_segments(seg_ids: list[int], stride: int
                       ) -> tuple[list[StackedSample], list[int]]:
        samples: list[StackedSample] = []
        sample_segments: list[int] = []
        for sid in seg_ids:
            idx = segments[sid]
            seg_samples = stack_frames([frames[i] for i in idx],
                                       [labels[i] for i in idx],
                                       window=window, stride=stride)
            samples.extend(seg_samples)
            sample_segments.extend([sid] * len(seg_samples))
        return samples, sample_segments

    train, train_segments = stack_segments(assignment.train, train_stride)
    val, val_segments = stack_segments(assignment.val, eval_stride)
    test, test_segments = stack_segments(assignment.test, eval_stride)
    if not train:
        raise ValueError("training split produced no windows; segments too short?")
    stats = fit_norm(train)
    return PreparedData(
        train=[apply_norm(s, stats) for s in train],
        val=[apply_norm(s, stats) for s in val],
        test=[apply_norm(s, stats) for s in test],
        train_segments=train_segments,
        val_segments=val_segments,
        test_segments=test_segments,
        norm_stats=stats,
        split_result=assignment,
    )


@dataclass
class TrainedPipeline:
    bundle: ModelBundle
    ddb_history: list[dict]
    dvn_history: list[dict]
    prepared: PreparedData


def train_pipeline(frames: list[RadarFrame], labels: list[ActivityLabel],
                   imu: list[ImuSample] | None = None,
                   window: int = 10, train_stride: int = 1,
                   eval_stride: int | None = None,
                   split_spec: SplitSpec | None = None,
                   training: TrainingConfig | None = None,
                   bump_k: float = 5.0) -> TrainedPipeline:
    """The full training recipe: gate, stack, fit scaling, train both stages."""
    training = training or TrainingConfig()
    split_spec = split_spec or SplitSpec(seed=training.seed)
    prepared = prepare_samples(frames, labels, imu=imu, window=window,
                               train_stride=train_stride, eval_stride=eval_stride,
                               split_spec=split_spec, bump_k=bump_k)
    bundle = build_bundle(seed=training.seed, window=window,
                          range_bins=frames[0].range_profile.size,
                          doppler_bins=frames[0].range_doppler.shape[0])
    bundle.norm_stats = prepared.norm_stats
    ddb_train = [s for s in prepared.train if s.label.is_dangerous]
    ddb_val = [s for s in prepared.val if s.label.is_dangerous]
    ddb_history = train_ddb(bundle, ddb_train, ddb_val, training)
    dvn_history = train_dvn(bundle, prepared.train, prepared.val, training)
    bundle.metadata["split_seed"] = split_spec.seed
    bundle.metadata["window"] = window
    return TrainedPipeline(bundle=bundle, ddb_history=ddb_history,
                           dvn_history=dvn_history, prepared=prepared)


# ---------------------------------------------------------------------------
# synthetic dataset assembly
# ---------------------------------------------------------------------------


def round_robin_script(segment_seconds: float, segments_per_class: int,
                       classes: list[ActivityLabel] | None = None
                       ) -> list[tuple[ActivityLabel, float, float]]:
    """Interleave equal-length segments of every class into one drive script."""
    classes = classes or list(ActivityLabel)
    script = []
    t = 0.0
    for _ in range(segments_per_class):
        for activity in classes:
            script.append((activity, t, segment_seconds))
            t += segment_seconds
    return script


def simulate_dataset(script, config: RadarConfig | None = None, seed: int = 0,
                     bump_times: list[float] | None = None,
                     snr_db: float | None = 20.0
                     ) -> tuple[list[RadarFrame], list[ActivityLabel], list[ImuSample]]:
    """Scripted drive straight to processed frames, labels and IMU stream."""
    config = config or RadarConfig()
    cubes, imu, labels = simulate_drive(script, config, seed=seed,
                                        bump_times=bump_times, snr_db=snr_db)
    frames = process_drive(cubes, config)
    return frames, labels, imu
