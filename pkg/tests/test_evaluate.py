import numpy as np
import pytest

from mmdrive.activities import ActivityLabel
from mmdrive.evaluate import (MetricsReport, SplitSpec, compute_metrics,
                              roc_curve, split, weighted_f1_score)


class TestSplit:
    def test_ten_equal_segments(self):
        items = list(range(100))
        segment_ids = [i // 10 for i in items]
        result = split(items, segment_ids, SplitSpec(seed=3))
        seg = lambda idx: {segment_ids[i] for i in idx}
        assert len(seg(result.test)) == 3
        assert len(seg(result.val)) == 1
        assert len(seg(result.train)) == 6
        assert len(result.test) == 30 and len(result.val) == 10

    def test_deterministic_by_seed(self):
        items = list(range(60))
        segment_ids = [i // 5 for i in items]
        a = split(items, segment_ids, SplitSpec(seed=9))
        b = split(items, segment_ids, SplitSpec(seed=9))
        assert (a.train, a.val, a.test) == (b.train, b.val, b.test)
        c = split(items, segment_ids, SplitSpec(seed=10))
        assert (a.train, a.val, a.test) != (c.train, c.val, c.test)

    def test_too_few_segments(self):
        with pytest.raises(ValueError, match="at least 3"):
            split([1, 2, 3, 4], [0, 0, 1, 1], SplitSpec())

    def test_no_segment_straddles_parts(self):
        rng = np.random.default_rng(0)
        segment_ids = list(rng.integers(0, 12, size=200))
        result = split(list(range(200)), segment_ids, SplitSpec(seed=1))
        parts = [result.train, result.val, result.test]
        seen = [{segment_ids[i] for i in part} for part in parts]
        assert not (seen[0] & seen[1])
        assert not (seen[0] & seen[2])
        assert not (seen[1] & seen[2])
        assert sorted(i for part in parts for i in part) == list(range(200))


def naive_metrics(predictions, truths, classes):
    """Textbook per-definition recomputation with explicit loops."""
    k = len(classes)
    confusion = [[0] * k for _ in range(k)]
    for t, p in zip(truths, predictions):
        confusion[classes.index(t)][classes.index(p)] += 1
    precision, recall, f1, support = [], [], [], []
    for i in range(k):
        tp = confusion[i][i]
        fp = sum(confusion[r][i] for r in range(k)) - tp
        fn = sum(confusion[i]) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
        support.append(sum(confusion[i]))
    weighted = sum(s * f for s, f in zip(support, f1)) / sum(support)
    accuracy = sum(confusion[i][i] for i in range(k)) / len(truths)
    return confusion, precision, recall, f1, support, weighted, accuracy


class TestComputeMetrics:
    def test_perfect_predictions(self):
        truths = [ActivityLabel.NODDING] * 4 + [ActivityLabel.YAWNING] * 6
        report = compute_metrics(truths, truths)
        assert report.weighted_f1 == 1.0
        assert report.accuracy == 1.0
        assert np.all(report.confusion == np.diag([4, 6]))

    def test_matches_naive_recomputation_on_random_cases(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            k = int(rng.integers(2, 7))
            classes = list(range(k))
            n = int(rng.integers(5, 60))
            truths = [int(c) for c in rng.integers(0, k, size=n)]
            predictions = [int(c) for c in rng.integers(0, k, size=n)]
            report = compute_metrics(predictions, truths, classes=classes)
            confusion, precision, recall, f1, support, weighted, accuracy = \
                naive_metrics(predictions, truths, classes)
            assert np.array_equal(report.confusion, np.array(confusion))
            assert np.allclose(report.precision, precision)
            assert np.allclose(report.recall, recall)
            assert np.allclose(report.f1, f1)
            assert report.weighted_f1 == pytest.approx(weighted, abs=1e-12)
            assert report.accuracy == pytest.approx(accuracy, abs=1e-12)

    def test_confusion_rows_equal_support(self):
        rng = np.random.default_rng(2)
        truths = [int(c) for c in rng.integers(0, 4, size=50)]
        predictions = [int(c) for c in rng.integers(0, 4, size=50)]
        report = compute_metrics(predictions, truths, classes=[0, 1, 2, 3])
        assert np.array_equal(report.confusion.sum(axis=1), report.support)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([1, 0], [1])
        with pytest.raises(ValueError):
            compute_metrics([], [])


class TestRoc:
    def test_perfect_ranking(self):
        _, auc = roc_curve([1, 0, 1, 0], [0.9, 0.1, 0.8, 0.2])
        assert auc == 1.0

    def test_inverted_ranking(self):
        points, auc = roc_curve([1, 0], [0.3, 0.7])
        assert auc == 0.0
        assert points == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]

    def test_ties_get_trapezoid_credit(self):
        _, auc = roc_curve([1, 0], [0.5, 0.5])
        assert auc == pytest.approx(0.5)

    def test_matches_rank_statistic(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(8, 40))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            s = np.round(rng.uniform(0, 1, size=n), 2)  # induce ties
            _, auc = roc_curve(y, s)
            pos = s[y == 1]
            neg = s[y == 0]
            wins = (pos[:, None] > neg[None, :]).sum()
            ties = (pos[:, None] == neg[None, :]).sum()
            expected = (wins + 0.5 * ties) / (len(pos) * len(neg))
            assert auc == pytest.approx(expected, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_curve([1, 1], [0.2, 0.4])

    def test_random_scores_hover_near_half(self):
        rng = np.random.default_rng(4)
        inside = 0
        trials = 1000
        y = np.array([1] * 200 + [0] * 200)
        for _ in range(trials):
            scores = rng.uniform(0, 1, size=400)
            _, auc = roc_curve(y, scores)
            inside += 0.4 <= auc <= 0.6
        assert inside / trials >= 0.99

    def test_metrics_report_carries_roc(self):
        report = compute_metrics([1, 0, 1, 0], [1, 0, 1, 0],
                                 positive_scores=[0.9, 0.1, 0.8, 0.2])
        assert report.auc == 1.0
        assert report.roc_points[0] == (0.0, 0.0)
        assert report.roc_points[-1] == (1.0, 1.0)


def test_weighted_f1_score_shortcut():
    assert weighted_f1_score([0, 1, 1], [0, 1, 0], classes=[0, 1]) \
        == pytest.approx(naive_metrics([0, 1, 1], [0, 1, 0], [0, 1])[5])
