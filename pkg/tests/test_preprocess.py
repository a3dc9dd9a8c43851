import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdrive.activities import ActivityLabel
from mmdrive.dsp import RadarFrame
from mmdrive.frameio import ImuSample
from mmdrive.preprocess import (NormStats, apply_norm, detect_bumps, fit_norm,
                                gate_frames, in_any_interval, stack_frames,
                                window_sample)


def imu_stream(duration=300.0, rate=50.0, base=9.81, noise=0.0, seed=0,
               spikes=()):
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration, 1.0 / rate)
    z = np.full_like(t, base) + noise * rng.standard_normal(t.shape)
    for spike_t, amp, width in spikes:
        z += amp * np.exp(-0.5 * ((t - spike_t) / width) ** 2)
    return [ImuSample(float(ts), float(az)) for ts, az in zip(t, z)]


def make_frames(n, start=0.0, dt=0.2, bins=8, doppler=4, value=0.0):
    frames = []
    for i in range(n):
        frames.append(RadarFrame(
            range_profile=np.full(bins, value + i),
            noise_profile=np.full(bins, value - i),
            range_doppler=np.full((doppler, bins), value),
            timestamp=start + i * dt,
            frame_index=i,
        ))
    return frames


class TestDetectBumps:
    def test_flat_stream_no_intervals(self):
        assert detect_bumps(imu_stream(duration=60.0)) == []

    def test_noisy_but_spike_free_stream(self):
        assert detect_bumps(imu_stream(duration=120.0, noise=0.05, seed=1)) == []

    def test_spike_at_170_is_found(self):
        imu = imu_stream(duration=300.0, noise=0.03, seed=2,
                         spikes=[(170.0, 8.0, 0.05)])
        intervals = detect_bumps(imu)
        assert len(intervals) == 1
        start, end = intervals[0]
        assert start <= 170.0 <= end

    def test_nearby_spikes_merge(self):
        imu = imu_stream(duration=60.0, noise=0.03, seed=3,
                         spikes=[(30.0, 8.0, 0.04), (30.2, 8.0, 0.04)])
        assert len(detect_bumps(imu)) == 1

    def test_distant_spikes_stay_separate(self):
        imu = imu_stream(duration=60.0, noise=0.03, seed=4,
                         spikes=[(20.0, 8.0, 0.04), (40.0, 8.0, 0.04)])
        assert len(detect_bumps(imu)) == 2

    def test_translation_and_offset_invariance(self):
        spikes = [(25.0, 9.0, 0.05)]
        imu = imu_stream(duration=50.0, noise=0.03, seed=5, spikes=spikes)
        base = detect_bumps(imu)
        shifted = [ImuSample(s.timestamp + 1000.0, s.accel_z + 3.5) for s in imu]
        moved = detect_bumps(shifted)
        assert len(base) == len(moved) == 1
        assert moved[0][0] == pytest.approx(base[0][0] + 1000.0, abs=1e-9)
        assert moved[0][1] == pytest.approx(base[0][1] + 1000.0, abs=1e-9)

    def test_empty_and_tiny_streams(self):
        assert detect_bumps([]) == []
        assert detect_bumps([ImuSample(0.0, 9.81)]) == []

    def test_non_increasing_timestamps_rejected(self):
        with pytest.raises(ValueError):
            detect_bumps([ImuSample(0.0, 9.8), ImuSample(0.0, 9.8)])


class TestGateFrames:
    def test_no_bumps_identity(self):
        frames = make_frames(20)
        assert gate_frames(frames, []) == frames

    def test_example_five_frames_removed(self):
        frames = make_frames(900)
        bumps = [(frames[848].timestamp, frames[852].timestamp)]
        assert len(gate_frames(frames, bumps)) == 895

    def test_bump_covering_everything(self):
        frames = make_frames(30)
        assert gate_frames(frames, [(-1.0, 100.0)]) == []

    def test_matches_brute_force_membership(self):
        rng = np.random.default_rng(6)
        frames = make_frames(200)
        bumps = sorted((float(a), float(a + rng.uniform(0.1, 2.0)))
                       for a in rng.uniform(0, 40, size=7))
        kept = gate_frames(frames, bumps)
        expected = [f for f in frames
                    if not any(s <= f.timestamp <= e for s, e in bumps)]
        assert kept == expected
        assert all(not in_any_interval(f.timestamp, bumps) for f in kept)


class TestStackFrames:
    def test_single_window_shapes(self):
        frames = make_frames(10, bins=64, doppler=16)
        labels = [ActivityLabel.NORMAL] * 10
        samples = stack_frames(frames, labels, window=10, stride=1)
        assert len(samples) == 1
        assert samples[0].rn.shape == (64, 2, 10)
        assert samples[0].rd.shape == (16, 64, 10)
        assert samples[0].window_start == frames[0].timestamp

    def test_known_count_300_frames(self):
        frames = make_frames(300)
        labels = [ActivityLabel.YAWNING] * 300
        samples = stack_frames(frames, labels, window=10, stride=5)
        assert len(samples) == (300 - 10) // 5 + 1 == 59

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(0, 80), window=st.integers(1, 12),
           stride=st.integers(1, 12))
    def test_count_matches_closed_form(self, n, window, stride):
        frames = make_frames(n)
        samples = stack_frames(frames, [ActivityLabel.NORMAL] * n,
                               window=window, stride=stride)
        expected = 0 if n < window else (n - window) // stride + 1
        assert len(samples) == expected

    def test_plane_assignment(self):
        frames = make_frames(10)
        samples = stack_frames(frames, [ActivityLabel.NORMAL] * 10, window=10)
        sample = samples[0]
        for f in range(10):
            assert np.array_equal(sample.rn[:, 0, f], frames[f].range_profile)
            assert np.array_equal(sample.rn[:, 1, f], frames[f].noise_profile)
            assert np.array_equal(sample.rd[:, :, f], frames[f].range_doppler)

    def test_majority_label(self):
        frames = make_frames(10)
        labels = [ActivityLabel.NORMAL] * 6 + [ActivityLabel.YAWNING] * 4
        sample = stack_frames(frames, labels, window=10)[0]
        assert sample.label is ActivityLabel.NORMAL

    def test_tie_goes_to_latest_frame_label(self):
        frames = make_frames(10)
        labels = [ActivityLabel.NORMAL] * 5 + [ActivityLabel.YAWNING] * 5
        sample = stack_frames(frames, labels, window=10)[0]
        assert sample.label is ActivityLabel.YAWNING

    def test_windows_never_span_gaps(self):
        frames = make_frames(10) + make_frames(10, start=5.0)
        labels = [ActivityLabel.NORMAL] * 20
        samples = stack_frames(frames, labels, window=10, stride=1)
        assert len(samples) == 2  # one full window per run
        spans = [s.window_start for s in samples]
        assert spans == [0.0, 5.0]

    def test_short_run_yields_nothing(self):
        frames = make_frames(5)
        assert stack_frames(frames, [ActivityLabel.NORMAL] * 5, window=10) == []

    def test_bad_arguments(self):
        frames = make_frames(10)
        with pytest.raises(ValueError):
            stack_frames(frames, [ActivityLabel.NORMAL] * 10, window=0)
        with pytest.raises(ValueError):
            stack_frames(frames, [ActivityLabel.NORMAL] * 9)


class TestNormalisation:
    def test_midpoint_maps_to_half(self):
        stats = NormStats(rn_min=-120.0, rn_max=-20.0, rd_min=-120.0, rd_max=-20.0)
        frames = make_frames(10, value=-70.0)
        sample = window_sample(frames)
        normed = apply_norm(sample, stats)
        assert normed.rd[0, 0, 0] == pytest.approx(0.5)

    def test_constant_plane_maps_to_zero(self):
        frames = make_frames(10, value=3.0)
        sample = window_sample(frames)
        stats = NormStats(rn_min=3.0, rn_max=3.0, rd_min=3.0, rd_max=3.0)
        normed = apply_norm(sample, stats)
        assert np.all(normed.rn == 0.0)
        assert np.all(normed.rd == 0.0)

    def test_out_of_range_values_clamp(self):
        frames = make_frames(10, value=0.0)
        sample = window_sample(frames)
        stats = NormStats(rn_min=100.0, rn_max=200.0, rd_min=-5.0, rd_max=-1.0)
        normed = apply_norm(sample, stats)
        assert np.all(normed.rn == 0.0)   # below the fitted minimum
        assert np.all(normed.rd == 1.0)   # above the fitted maximum

    def test_fit_then_apply_lands_in_unit_interval(self):
        rng = np.random.default_rng(7)
        batches = []
        for start in (0.0, 40.0, 90.0):
            frames = make_frames(15, start=start, value=float(rng.uniform(-100, 50)))
            batches.extend(stack_frames(frames, [ActivityLabel.NODDING] * 15,
                                        window=10, stride=2))
        stats = fit_norm(batches)
        for sample in batches:
            normed = apply_norm(sample, stats)
            assert normed.rn.min() >= 0.0 and normed.rn.max() <= 1.0
            assert normed.rd.min() >= 0.0 and normed.rd.max() <= 1.0

    def test_empty_fit_rejected(self):
        with pytest.raises(ValueError):
            fit_norm([])

    def test_stats_validation(self):
        with pytest.raises(ValueError):
            NormStats(rn_min=1.0, rn_max=0.0, rd_min=0.0, rd_max=1.0)
