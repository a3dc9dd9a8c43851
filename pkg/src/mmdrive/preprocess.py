"""Frame-stream preprocessing: IMU bump gating, 10-frame stacking, min-max scaling.

Road bumps are localised by comparing the accelerometer z axis against its
rolling median; the spread estimate is the median absolute deviation of the
residual, so driver-activity accelerations do not inflate the threshold. Gated
frames are dropped, stacking never spans the resulting gaps, and one (min, max)
pair per tensor kind is fitted on the training split only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .activities import ActivityLabel
from .dsp import RadarFrame
from .frameio import ImuSample

#: Consistency factor turning a median absolute deviation into a sigma.
MAD_SIGMA = 1.4826

DEFAULT_BUMP_K = 5.0
DEFAULT_MERGE_GAP = 0.5      # s, exceedance groups closer than this merge
DEFAULT_PAD = 0.3            # s, padding applied to each side of an interval
_MEDIAN_WINDOW_SECONDS = 1.5


@dataclass(frozen=True)
class StackedSample:
    """Model-ready tensors for one 10-frame window.

    ``rn`` stacks the range profile (column 0) and noise profile (column 1)
    per frame: shape (range_bins, 2, window). ``rd`` stacks the heatmaps:
    shape (doppler_bins, range_bins, window).
    """

    rn: np.ndarray
    rd: np.ndarray
    label: ActivityLabel | None   # None for inference-time windows
    window_start: float


@dataclass(frozen=True)
class NormStats:
    """Per-tensor-kind min/max fitted on the training split."""

    rn_min: float
    rn_max: float
    rd_min: float
    rd_max: float

    def __post_init__(self) -> None:
        if self.rn_min > self.rn_max or self.rd_min > self.rd_max:
            raise ValueError("normalisation minimum exceeds maximum")


def _rolling_median(values: np.ndarray, window: int) -> np.ndarray:
    """Centred rolling median with nearest-edge padding (offset invariant)."""
    if window <= 1 or values.size <= 2:
        return np.full_like(values, np.median(values))
    window = min(window if window % 2 else window + 1, values.size | 1)
    half = window // 2
    padded = np.concatenate([
        np.full(half, values[0]), values, np.full(half, values[-1])
    ])
    view = np.lib.stride_tricks.sliding_window_view(padded, window)
    return np.median(view, axis=1)


def detect_bumps(imu: list[ImuSample], k: float = DEFAULT_BUMP_K,
                 merge_gap: float = DEFAULT_MERGE_GAP,
                 pad: float = DEFAULT_PAD) -> list[tuple[float, float]]:
    """Locate road-bump intervals in an accelerometer z-axis stream.

    A sample is an exceedance when |accel_z - rolling median| > k * sigma,
    sigma being the scaled median absolute deviation of the residual stream.
    Exceedance groups separated by less than ``merge_gap`` seconds merge, and
    every interval is padded by ``pad`` seconds on each side. Empty or
    spike-free streams yield no intervals.
    """
    if len(imu) < 2:
        return []
    t = np.array([s.timestamp for s in imu])
    if np.any(np.diff(t) <= 0):
        raise ValueError("IMU timestamps must be strictly increasing")
    az = np.array([s.accel_z for s in imu])
    dt = float(np.median(np.diff(t)))
    window = max(3, int(round(_MEDIAN_WINDOW_SECONDS / dt)))
    residual = az - _rolling_median(az, window)
    sigma = MAD_SIGMA * float(np.median(np.abs(residual - np.median(residual))))
    threshold = k * sigma if sigma > 0 else 1e-9
    exceed = np.abs(residual) > threshold
    if not np.any(exceed):
        return []

    times = t[exceed]
    intervals: list[list[float]] = [[times[0], times[0]]]
    for ts in times[1:]:
        if ts - intervals[-1][1] < merge_gap:
            intervals[-1][1] = ts
        else:
            intervals.append([ts, ts])
    return [(start - pad, end + pad) for start, end in intervals]


def in_any_interval(timestamp: float,
                    intervals: list[tuple[float, float]]) -> bool:
    return any(start <= timestamp <= end for start, end in intervals)


def gate_frames(frames: list[RadarFrame],
                bumps: list[tuple[float, float]]) -> list[RadarFrame]:
    """Drop frames whose timestamps fall inside any bump interval."""
    if not bumps:
        return list(frames)
    return [f for f in frames if not in_any_interval(f.timestamp, bumps)]


def gate_indexed(frames: list[RadarFrame], labels: list[ActivityLabel],
                 bumps: list[tuple[float, float]]
                 ) -> tuple[list[RadarFrame], list[ActivityLabel]]:
    """gate_frames that keeps a parallel label list aligned."""
    kept = [(f, l) for f, l in zip(frames, labels)
            if not in_any_interval(f.timestamp, bumps)]
    return [f for f, _ in kept], [l for _, l in kept]


def _split_runs(frames: list[RadarFrame]) -> list[list[int]]:
    """Indices of contiguous-in-time runs; gating gaps split the stream."""
    if not frames:
        return []
    ts = np.array([f.timestamp for f in frames])
    diffs = np.diff(ts)
    positive = diffs[diffs > 0]
    nominal = float(positive.min()) if positive.size else 0.0
    runs: list[list[int]] = [[0]]
    for i, gap in enumerate(diffs, start=1):
        if nominal > 0 and gap > 1.5 * nominal:
            runs.append([i])
        else:
            runs[-1].append(i)
    return runs


def _window_label(labels: list[ActivityLabel]) -> ActivityLabel:
    counts: dict[ActivityLabel, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    for lab in reversed(labels):  # ties resolve to the latest frame's label
        if counts[lab] == best:
            return lab
    raise AssertionError("unreachable")


def stack_frames(frames: list[RadarFrame], labels: list[ActivityLabel],
                 window: int = 10, stride: int = 1) -> list[StackedSample]:
    """Slide a ``window``-frame stacker over each contiguous run.

    Frame f of a window contributes its range profile to rn[:, 0, f] and its
    noise profile to rn[:, 1, f]; heatmaps stack along the last axis of rd.
    The window label is the majority per-frame label (ties go to the latest
    frame's label). Runs shorter than the window yield no samples.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if len(frames) != len(labels):
        raise ValueError("frames and labels must align")
    samples: list[StackedSample] = []
    for run in _split_runs(frames):
        for start in range(0, len(run) - window + 1, stride):
            idx = run[start:start + window]
            chunk = [frames[i] for i in idx]
            rn = np.stack(
                [np.stack([f.range_profile, f.noise_profile], axis=1) for f in chunk],
                axis=2,
            )
            rd = np.stack([f.range_doppler for f in chunk], axis=2)
            samples.append(StackedSample(
                rn=rn,
                rd=rd,
                label=_window_label([labels[i] for i in idx]),
                window_start=chunk[0].timestamp,
            ))
    return samples


def window_sample(frames: list[RadarFrame]) -> StackedSample:
    """Unlabelled stacked tensors for an inference-time rolling window."""
    rn = np.stack(
        [np.stack([f.range_profile, f.noise_profile], axis=1) for f in frames],
        axis=2,
    )
    rd = np.stack([f.range_doppler for f in frames], axis=2)
    return StackedSample(rn=rn, rd=rd, label=None,
                         window_start=frames[0].timestamp)


def fit_norm(train: list[StackedSample]) -> NormStats:
    """Per-tensor-kind min/max over the training samples."""
    if not train:
        raise ValueError("cannot fit normalisation statistics on an empty set")
    rn_min = min(float(s.rn.min()) for s in train)
    rn_max = max(float(s.rn.max()) for s in train)
    rd_min = min(float(s.rd.min()) for s in train)
    rd_max = max(float(s.rd.max()) for s in train)
    return NormStats(rn_min=rn_min, rn_max=rn_max, rd_min=rd_min, rd_max=rd_max)


def _scale(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros_like(x)  # degenerate plane
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def apply_norm(sample: StackedSample, stats: NormStats) -> StackedSample:
    """Min-max scale into [0, 1], clamping values outside the fitted range."""
    return replace(
        sample,
        rn=_scale(sample.rn, stats.rn_min, stats.rn_max),
        rd=_scale(sample.rd, stats.rd_min, stats.rd_max),
    )
