import numpy as np
import pytest

from mmdrive.activities import ActivityLabel
from mmdrive.dsp import RadarFrame
from mmdrive.models import VerdictKind, build_bundle, train_ddb, train_dvn, TrainingConfig
from mmdrive.preprocess import NormStats
from mmdrive.streaming import BoundedFrameQueue, run_stream

from test_models import SMALL, toy_dataset


def make_frame(i, rng, range_bins=16, doppler_bins=8, dt=0.2):
    return RadarFrame(
        range_profile=rng.uniform(0, 1, range_bins),
        noise_profile=rng.uniform(0, 1, range_bins),
        range_doppler=rng.uniform(0, 1, (doppler_bins, range_bins)),
        timestamp=i * dt,
        frame_index=i,
    )


@pytest.fixture(scope="module")
def small_bundle():
    rng = np.random.default_rng(21)
    bundle = build_bundle(seed=21, **SMALL)
    train = toy_dataset(rng, per_class=4)
    train_ddb(bundle, train, [], TrainingConfig(epochs=6, seed=21))
    train_dvn(bundle, train + toy_dataset(rng, per_class=6,
                                          classes=[ActivityLabel.NORMAL]),
              [], TrainingConfig(epochs=6, seed=21))
    bundle.norm_stats = NormStats(0.0, 1.0, 0.0, 1.0)
    return bundle


class TestBoundedQueue:
    def test_fifo_order(self):
        q = BoundedFrameQueue(4)
        for i in range(3):
            q.push(i)
        q.close()
        assert [q.pop(), q.pop(), q.pop(), q.pop()] == [0, 1, 2, None]

    def test_oldest_dropped_when_full(self):
        q = BoundedFrameQueue(3)
        for i in range(8):
            q.push(i)
        q.close()
        assert q.dropped == 5
        assert [q.pop(), q.pop(), q.pop()] == [5, 6, 7]

    def test_depth_validation(self):
        with pytest.raises(ValueError):
            BoundedFrameQueue(0)


class TestRunStream:
    def test_warmup_then_one_verdict_per_frame(self, small_bundle):
        rng = np.random.default_rng(1)
        frames = [make_frame(i, rng) for i in range(25)]
        verdicts = []
        stats = run_stream(frames, small_bundle, queue_depth=64,
                           on_verdict=lambda f, v: verdicts.append((f, v)))
        window = small_bundle.window
        assert stats.frames_in == 25
        assert stats.verdicts == 25 - window + 1
        assert len(verdicts) == stats.verdicts
        assert stats.frames_dropped == 0

    def test_counter_identity(self, small_bundle):
        rng = np.random.default_rng(2)
        frames = [make_frame(i, rng) for i in range(30)]
        kinds = []
        stats = run_stream(frames, small_bundle, queue_depth=64,
                           on_verdict=lambda f, v: kinds.append(v.kind))
        dangerous = kinds.count(VerdictKind.DANGEROUS)
        assert stats.counters.ddb_calls == dangerous
        assert stats.counters.dvn_calls == stats.verdicts - stats.suppressed

    def test_bump_intervals_suppress(self, small_bundle):
        rng = np.random.default_rng(3)
        frames = [make_frame(i, rng) for i in range(20)]
        window = small_bundle.window
        bump = (1.0, 1.4)  # frames 5..7
        kinds = []
        stats = run_stream(frames, small_bundle, bump_intervals=[bump],
                           queue_depth=64,
                           on_verdict=lambda f, v: kinds.append((f.frame_index, v.kind)))
        times = [f.timestamp for f in frames]
        for last, kind in kinds:
            in_bump = [bump[0] <= times[i] <= bump[1]
                       for i in range(last - window + 1, last + 1)]
            assert (kind is VerdictKind.SUPPRESSED) == any(in_bump)
        assert stats.suppressed == sum(k is VerdictKind.SUPPRESSED for _, k in kinds)
        assert stats.suppressed > 0

    def test_missing_norm_stats_rejected(self, small_bundle):
        bundle = build_bundle(seed=0, **SMALL)
        with pytest.raises(ValueError, match="normalisation"):
            run_stream([], bundle)

    def test_deterministic_verdicts(self, small_bundle):
        rng_a = np.random.default_rng(4)
        rng_b = np.random.default_rng(4)
        frames_a = [make_frame(i, rng_a) for i in range(18)]
        frames_b = [make_frame(i, rng_b) for i in range(18)]
        out_a, out_b = [], []
        run_stream(frames_a, small_bundle, queue_depth=64,
                   on_verdict=lambda f, v: out_a.append((v.kind, v.dvn_score)))
        run_stream(frames_b, small_bundle, queue_depth=64,
                   on_verdict=lambda f, v: out_b.append((v.kind, v.dvn_score)))
        assert out_a == out_b
