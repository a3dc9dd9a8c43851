"""Splits, metrics and the desk-scale experiment harnesses.

Splitting happens at recording-segment granularity: windows stacked from one
segment never straddle the train/test boundary, so overlapping training
windows cannot leak into evaluation. Metrics follow the standard definitions;
ROC curves take a threshold at every distinct score and integrate by
trapezoid.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activities import ActivityLabel


@dataclass(frozen=True)
class SplitSpec:
    """Segment-level 70/30 split with a validation share of the train side."""

    train_fraction: float = 0.7
    test_fraction: float = 0.3
    validation_fraction_of_train: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise ValueError("train and test fractions must sum to 1")
        if not 0.0 <= self.validation_fraction_of_train < 1.0:
            raise ValueError("validation fraction must lie in [0, 1)")


@dataclass(frozen=True)
class SplitResult:
    train: list[int]
    val: list[int]
    test: list[int]


def split(items, segment_ids, spec: SplitSpec, stratify_by=None) -> SplitResult:
    """Assign item indices to train/val/test by shuffling whole segments.

    ``segment_ids`` aligns with ``items``; all items of a segment land in the
    same part. Requires at least 3 segments. With ``stratify_by`` (one label
    per item) the test fraction is allocated within each label group, so every
    class with two or more segments is represented on both sides; single-
    segment classes stay in train.
    """
    if len(items) != len(segment_ids):
        raise ValueError("items and segment_ids must align")
    if stratify_by is not None and len(stratify_by) != len(items):
        raise ValueError("stratify_by must align with items")
    seen: dict = {}
    seg_label: dict = {}
    for i, sid in enumerate(segment_ids):
        if sid not in seen:
            seen[sid] = len(seen)
            seg_label[sid] = stratify_by[i] if stratify_by is not None else None
    segments = list(seen)
    if len(segments) < 3:
        raise ValueError(f"need at least 3 segments to split, got {len(segments)}")
    rng = np.random.default_rng(spec.seed)

    test_segs: set = set()
    train_pool: list = []
    if stratify_by is None:
        order = rng.permutation(len(segments))
        n_test = int(round(spec.test_fraction * len(segments)))
        n_test = min(max(n_test, 1), len(segments) - 2)
        test_segs = {segments[i] for i in order[:n_test]}
        train_pool = [segments[i] for i in order[n_test:]]
    else:
        groups: dict = {}
        for sid in segments:
            groups.setdefault(seg_label[sid], []).append(sid)
        for label_segments in groups.values():
            order = rng.permutation(len(label_segments))
            if len(label_segments) < 2:
                train_pool.extend(label_segments)
                continue
            n_test = int(round(spec.test_fraction * len(label_segments)))
            n_test = min(max(n_test, 1), len(label_segments) - 1)
            test_segs.update(label_segments[i] for i in order[:n_test])
            train_pool.extend(label_segments[i] for i in order[n_test:])
        train_pool = [train_pool[i] for i in rng.permutation(len(train_pool))]

    n_val = int(round(spec.validation_fraction_of_train * len(train_pool)))
    if spec.validation_fraction_of_train > 0 and len(train_pool) >= 2:
        n_val = max(n_val, 1)
    n_val = min(n_val, len(train_pool) - 1)
    val_segs = set(train_pool[:n_val])

    result = SplitResult(train=[], val=[], test=[])
    for i, sid in enumerate(segment_ids):
        if sid in test_segs:
            result.test.append(i)
        elif sid in val_segs:
            result.val.append(i)
        else:
            result.train.append(i)
    return result


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    classes: list
    confusion: np.ndarray          # (k, k) counts, rows = truth
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weighted_f1: float
    accuracy: float
    roc_points: list[tuple[float, float]] | None = None
    auc: float | None = None


def _class_order(labels) -> list:
    distinct = set(labels)
    if all(isinstance(x, ActivityLabel) for x in distinct):
        return [lab for lab in ActivityLabel if lab in distinct]
    return sorted(distinct, key=repr)


def compute_metrics(predictions, truths, positive_scores=None,
                    classes=None) -> MetricsReport:
    """Confusion matrix, per-class precision/recall/F1, weighted F1, accuracy.

    For binary tasks, pass the positive-class scores to add an ROC curve and
    its AUC; truths must then be 0/1 (or boolean).
    """
    if len(predictions) != len(truths) or len(truths) == 0:
        raise ValueError("predictions and truths must be equal-length and non-empty")
    classes = list(classes) if classes is not None else _class_order(
        list(truths) + list(predictions))
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(truths, predictions):
        confusion[index[t], index[p]] += 1

    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    diag = np.diag(confusion).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, diag / predicted, 0.0)
        recall = np.where(support > 0, diag / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / pr, 0.0)
    weighted_f1 = float((support * f1).sum() / support.sum())
    accuracy = float(diag.sum() / confusion.sum())

    roc_points = auc = None
    if positive_scores is not None:
        y = np.asarray([int(bool(t)) for t in truths])
        roc_points, auc = roc_curve(y, np.asarray(positive_scores, dtype=np.float64))
    return MetricsReport(
        classes=classes, confusion=confusion, precision=precision,
        recall=recall, f1=f1, support=support, weighted_f1=weighted_f1,
        accuracy=accuracy, roc_points=roc_points, auc=auc,
    )


def roc_curve(truths, scores) -> tuple[list[tuple[float, float]], float]:
    """ROC points at every distinct score plus trapezoidal AUC."""
    y = np.asarray(truths).astype(np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("truths and scores must align")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both a positive and a negative example")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s_sorted):  # group tied scores into one threshold
        j = i
        while j < len(s_sorted) and s_sorted[j] == s_sorted[i]:
            tp += int(y_sorted[j] == 1)
            fp += int(y_sorted[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, float(auc)


def weighted_f1_score(predictions, truths, classes=None) -> float:
    return compute_metrics(predictions, truths, classes=classes).weighted_f1


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    window: int
    weighted_f1: float


@dataclass
class SweepResult:
    points: list[SweepPoint]

    @property
    def best_window(self) -> int:
        return max(self.points, key=lambda p: p.weighted_f1).window

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "weighted_f1"])
            for p in self.points:
                writer.writerow([p.window, f"{p.weighted_f1:.6f}"])


def frame_stack_sweep(frames, labels, windows, seed: int = 0,
                      epochs: int = 20, train_stride: int = 1,
                      csv_path=None, batch_size: int = 32) -> SweepResult:
    """Re-stack, re-train and score the 9-way classifier per window size.

    Evaluation windows are non-overlapping (stride = window); training windows
    use ``train_stride``. Training runs on a reduced epoch budget.
    """
    from .models import TrainingConfig, build_bundle, predict_ddb, train_ddb
    from .pipeline import prepare_samples

    points = []
    for window in windows:
        prepared = prepare_samples(
            frames, labels, window=window, train_stride=train_stride,
            eval_stride=window, split_spec=SplitSpec(seed=seed),
        )
        train = [s for s in prepared.train if s.label.is_dangerous]
        val = [s for s in prepared.val if s.label.is_dangerous]
        test = [s for s in prepared.test if s.label.is_dangerous]
        bundle = build_bundle(seed=seed, window=window)
        train_ddb(bundle, train, val,
                  TrainingConfig(epochs=epochs, seed=seed, batch_size=batch_size))
        predictions = predict_ddb(bundle, test)
        score = weighted_f1_score(predictions, [s.label for s in test])
        points.append(SweepPoint(window=window, weighted_f1=score))
    result = SweepResult(points=points)
    if csv_path is not None:
        result.write_csv(csv_path)
    return result


@dataclass
class ModelComparison:
    rows: list[dict]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.rows[0].keys()))
            writer.writeheader()
            writer.writerows(self.rows)

    def write_markdown(self, path) -> None:
        keys = list(self.rows[0].keys())
        lines = ["| " + " | ".join(keys) + " |",
                 "| " + " | ".join("---" for _ in keys) + " |"]
        for row in self.rows:
            lines.append("| " + " | ".join(str(row[k]) for k in keys) + " |")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def compare_models(prepared, seed: int = 0, epochs: int = 30,
                   n_estimators: int = 100,
                   report_dir=None, batch_size: int = 32) -> ModelComparison:
    """Side-by-side fused-CNN vs random-forest report on one prepared split."""
    from .forest import engineer_features, predict_forest, train_forest
    from .models import TrainingConfig, build_bundle, predict_ddb, train_ddb

    train = [s for s in prepared.train if s.label.is_dangerous]
    val = [s for s in prepared.val if s.label.is_dangerous]
    test = [s for s in prepared.test if s.label.is_dangerous]
    truths = [s.label for s in test]

    window = train[0].rn.shape[2]
    bundle = build_bundle(seed=seed, window=window)
    train_ddb(bundle, train, val,
              TrainingConfig(epochs=epochs, seed=seed, batch_size=batch_size))
    t0 = time.perf_counter()
    cnn_pred = predict_ddb(bundle, test)
    cnn_ms = (time.perf_counter() - t0) / len(test) * 1e3
    cnn_report = compute_metrics(cnn_pred, truths)

    feats = np.stack([engineer_features(s) for s in train + val])
    labels = [s.label for s in train + val]
    forest = train_forest(feats, labels, n_estimators=n_estimators, seed=seed)
    test_feats = [engineer_features(s) for s in test]
    t0 = time.perf_counter()
    rf_pred = [predict_forest(forest, f)[0] for f in test_feats]
    rf_ms = (time.perf_counter() - t0) / len(test) * 1e3
    rf_report = compute_metrics(rf_pred, truths)

    rows = []
    for name, report, latency in (("fused_cnn", cnn_report, cnn_ms),
                                  ("random_forest", rf_report, rf_ms)):
        for cls, f1 in zip(report.classes, report.f1):
            rows.append({"model": name, "class": cls.value,
                         "f1": f"{f1:.4f}", "latency_ms": ""})
        rows.append({"model": name, "class": "overall",
                     "f1": f"{report.weighted_f1:.4f}",
                     "latency_ms": f"{latency:.2f}"})
    comparison = ModelComparison(rows=rows)
    if report_dir is not None:
        report_dir = Path(report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        comparison.write_csv(report_dir / "model_comparison.csv")
        comparison.write_markdown(report_dir / "model_comparison.md")
    return comparison
