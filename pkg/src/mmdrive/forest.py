"""Random-forest baseline: 480 hand-engineered block statistics and a
bagged ensemble of axis-aligned Gini decision trees.

Feature layout (documented order, frame-major): for each of the 10 frames,
for each source [range profile | noise profile | range-doppler], for each of
its 4 blocks (16-bin profile blocks, 16x16 heatmap blocks), the statistics
[min, max, mean, std]. 3 sources x 4 blocks x 4 stats x 10 frames = 480.
Standard deviations use the population form: blocks are fixed windows, not
samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .activities import ActivityLabel
from .preprocess import StackedSample

FEATURE_COUNT = 480
_BLOCK = 16


def _block_stats(values: np.ndarray) -> list[float]:
    return [float(values.min()), float(values.max()),
            float(values.mean()), float(values.std())]


def engineer_features(sample: StackedSample) -> np.ndarray:
    """480 block statistics of one stacked window, in the documented order."""
    if sample.rn.ndim != 3 or sample.rn.shape[1] != 2:
        raise ValueError(f"rn tensor must be (range_bins, 2, window), got {sample.rn.shape}")
    range_bins, _, window = sample.rn.shape
    doppler_bins = sample.rd.shape[0]
    if sample.rd.shape != (doppler_bins, range_bins, window):
        raise ValueError("rd tensor does not align with the rn tensor")
    if range_bins % _BLOCK or sample.rd.shape[1] % _BLOCK:
        raise ValueError(f"range axis must divide into {_BLOCK}-bin blocks")

    features: list[float] = []
    for f in range(window):
        for profile in (sample.rn[:, 0, f], sample.rn[:, 1, f]):
            for block in profile.reshape(-1, _BLOCK):
                features.extend(_block_stats(block))
        plane = sample.rd[:, :, f]
        for b in range(plane.shape[1] // _BLOCK):
            features.extend(_block_stats(plane[:, b * _BLOCK:(b + 1) * _BLOCK]))
    return np.array(features, dtype=np.float64)


# ---------------------------------------------------------------------------
# decision trees
# ---------------------------------------------------------------------------


@dataclass
class _Tree:
    """Flat node arrays; leaves have feature == -1 and a class distribution."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    dist: list[np.ndarray]

    def predict_dist(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                else self.right[node]
        return self.dist[node]


def _gini_cost(x: np.ndarray, y: np.ndarray, n_classes: int,
               feats: np.ndarray) -> tuple[float, int, float] | None:
    """Best (cost, feature, threshold) over candidate features, or None."""
    n = x.shape[0]
    sub = x[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(sub, order, axis=0)
    sorted_y = y[order]  # (n, m)
    onehot = sorted_y[:, :, None] == np.arange(n_classes)[None, None, :]
    cum = np.cumsum(onehot, axis=0, dtype=np.float64)  # (n, m, k)

    left_counts = cum[:-1]               # split after row i -> i+1 items left
    total = cum[-1]
    right_counts = total[None, :, :] - left_counts
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    gini_left = 1.0 - ((left_counts / n_left[:, :, None]) ** 2).sum(axis=2)
    gini_right = 1.0 - ((right_counts / n_right[:, :, None]) ** 2).sum(axis=2)
    cost = (n_left * gini_left + n_right * gini_right) / n

    valid = sorted_vals[1:] != sorted_vals[:-1]
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf)
    flat = int(np.argmin(cost))
    row, col = divmod(flat, cost.shape[1])
    threshold = 0.5 * (sorted_vals[row, col] + sorted_vals[row + 1, col])
    return float(cost[row, col]), int(feats[col]), float(threshold)


def _grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int,
               rng: np.random.Generator, max_depth: int | None,
               n_candidates: int) -> _Tree:
    tree = _Tree(feature=[], threshold=[], left=[], right=[], dist=[])

    def leaf_dist(idx: np.ndarray) -> np.ndarray:
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        return counts / counts.sum()

    # explicit stack: (node slot, indices, depth)
    tree.feature.append(-1)
    tree.threshold.append(0.0)
    tree.left.append(-1)
    tree.right.append(-1)
    tree.dist.append(None)
    stack = [(0, np.arange(x.shape[0]), 0)]
    while stack:
        slot, idx, depth = stack.pop()
        labels = y[idx]
        pure = labels.min() == labels.max()
        depth_out = max_depth is not None and depth >= max_depth
        if pure or depth_out or idx.size < 2:
            tree.dist[slot] = leaf_dist(idx)
            continue
        feats = rng.choice(x.shape[1], size=min(n_candidates, x.shape[1]),
                           replace=False)
        best = _gini_cost(x[idx], labels, n_classes, feats)
        if best is None:
            tree.dist[slot] = leaf_dist(idx)
            continue
        _, feature, threshold = best
        mask = x[idx, feature] <= threshold
        for child_mask in (mask, ~mask):
            tree.feature.append(-1)
            tree.threshold.append(0.0)
            tree.left.append(-1)
            tree.right.append(-1)
            tree.dist.append(None)
        left_slot, right_slot = len(tree.feature) - 2, len(tree.feature) - 1
        tree.feature[slot] = feature
        tree.threshold[slot] = threshold
        tree.left[slot] = left_slot
        tree.right[slot] = right_slot
        stack.append((left_slot, idx[mask], depth + 1))
        stack.append((right_slot, idx[~mask], depth + 1))
    return tree


@dataclass
class Forest:
    """Bagged Gini trees over a fixed class list."""

    trees: list[_Tree]
    classes: list
    n_estimators: int
    seed: int
    max_depth: int | None = None


def train_forest(features: np.ndarray, labels, n_estimators: int = 100,
                 max_depth: int | None = None, seed: int = 0,
                 bootstrap: bool = True) -> Forest:
    """Fit bootstrap-resampled trees with sqrt(d) feature subsampling.

    Per-tree generators derive deterministically from the master seed, so
    tree training is order-independent and reproducible. ``bootstrap=False``
    fits every tree on the full sample (a plain decision tree at
    n_estimators=1).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise ValueError("features must be (n_samples, n_features) aligned with labels")
    if n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    classes = _class_list(labels)
    if len(classes) < 2:
        raise ValueError("training a forest needs at least 2 classes")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in labels], dtype=np.int64)
    n_candidates = max(1, int(np.sqrt(x.shape[1])))

    trees = []
    for child_seed in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child_seed)
        if bootstrap:
            boot = rng.integers(0, x.shape[0], size=x.shape[0])
        else:
            boot = np.arange(x.shape[0])
        trees.append(_grow_tree(x[boot], y[boot], len(classes), rng,
                                max_depth, n_candidates))
    return Forest(trees=trees, classes=classes, n_estimators=n_estimators,
                  seed=seed, max_depth=max_depth)


def _class_list(labels) -> list:
    distinct = set(labels)
    if all(isinstance(x, ActivityLabel) for x in distinct):
        return [lab for lab in ActivityLabel if lab in distinct]
    return sorted(distinct, key=repr)


def predict_forest(forest: Forest, feature: np.ndarray):
    """Mean of the leaf distributions across trees; ties take the lowest index."""
    if not forest.trees:
        raise RuntimeError("forest has no trained trees")
    x = np.asarray(feature, dtype=np.float64)
    probs = np.mean([tree.predict_dist(x) for tree in forest.trees], axis=0)
    return forest.classes[int(np.argmax(probs))], probs


# ---------------------------------------------------------------------------
# portable JSON serialization
# ---------------------------------------------------------------------------


def forest_to_json(forest: Forest) -> str:
    if forest.classes and all(isinstance(c, ActivityLabel) for c in forest.classes):
        label_kind, classes = "activity", [c.value for c in forest.classes]
    else:
        label_kind, classes = "raw", list(forest.classes)
    return json.dumps({
        "n_estimators": forest.n_estimators,
        "seed": forest.seed,
        "max_depth": forest.max_depth,
        "label_kind": label_kind,
        "classes": classes,
        "trees": [{
            "feature": tree.feature,
            "threshold": tree.threshold,
            "left": tree.left,
            "right": tree.right,
            "dist": [d.tolist() if d is not None else None for d in tree.dist],
        } for tree in forest.trees],
    })


def forest_from_json(text: str) -> Forest:
    obj = json.loads(text)
    if obj.get("label_kind") == "activity":
        classes = [ActivityLabel.from_name(name) for name in obj["classes"]]
    else:
        classes = list(obj["classes"])
    trees = [
        _Tree(feature=t["feature"], threshold=t["threshold"], left=t["left"],
              right=t["right"],
              dist=[np.array(d) if d is not None else None for d in t["dist"]])
        for t in obj["trees"]
    ]
    return Forest(trees=trees, classes=classes,
                  n_estimators=obj["n_estimators"], seed=obj["seed"],
                  max_depth=obj.get("max_depth"))
