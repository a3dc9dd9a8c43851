"""The fused two-branch CNN: feature-extraction branches, the 9-way
dangerous-behaviour head, the dangerous-vs-normal gate, and lazy inference.

The range-noise branch (three valid-padding convolutions + global average
pool) embeds the 64x2x10 profile stack into 96 dimensions; the range-doppler
branch (four same-padding convolutions + global average pool) embeds the
16x64x10 heatmap stack into 128. The concatenated 224-dim embedding feeds
both heads. Joint training backpropagates only the 9-way head's gradients
into the branches; the binary gate trains afterwards against frozen
embeddings, so feature weights stay bit-identical through gate training.

At run time the gate scores every window; the 9-way head is evaluated only
for windows the gate flags, and windows overlapping a road bump are
suppressed without touching either network.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .activities import DANGEROUS_INDEX, DANGEROUS_LABELS, ActivityLabel
from .evaluate import roc_curve, weighted_f1_score
from .nn import (Adam, Conv2D, Dense, Dropout, GlobalAvgPool, ReLU,
                 Sequential, Sigmoid, Softmax, binary_cross_entropy,
                 cross_entropy)
from .nn.serialize import network_from_spec, network_to_spec
from .preprocess import NormStats, StackedSample

RN_EMBED_DIM = 96
RD_EMBED_DIM = 128
EMBED_DIM = RN_EMBED_DIM + RD_EMBED_DIM


@dataclass
class TrainingConfig:
    """First-order training hyperparameters (all overridable from the CLI)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    seed: int = 0


@dataclass
class ModelBundle:
    """Trainable state: both branches, both heads, scaling stats, metadata."""

    fe_rn_branch: Sequential
    fe_rd_branch: Sequential
    ddb_head: Sequential
    dvn_head: Sequential
    norm_stats: NormStats | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def fe_trained(self) -> bool:
        return bool(self.metadata.get("fe_trained", False))

    @property
    def window(self) -> int:
        return self.fe_rn_branch.input_shape[2]

    def fe_parameters(self) -> dict:
        """All feature-extraction parameters, keyed by (branch, layer, name)."""
        out = {}
        for branch, net in (("rn", self.fe_rn_branch), ("rd", self.fe_rd_branch)):
            for (i, name), arr in net.parameters().items():
                out[(branch, i, name)] = arr
        return out


def build_bundle(seed: int = 0, window: int = 10, range_bins: int = 64,
                 doppler_bins: int = 16) -> ModelBundle:
    """Assemble the untrained fused model with seeded initial weights."""
    rng = np.random.default_rng(seed)
    rn_branch = Sequential([
        Conv2D((3, 2), window, 32, "valid", rng=rng), ReLU(),
        Conv2D((3, 1), 32, 64, "valid", rng=rng), ReLU(),
        Conv2D((3, 1), 64, RN_EMBED_DIM, "valid", rng=rng), ReLU(),
        GlobalAvgPool(),
    ], input_shape=(range_bins, 2, window))
    rd_branch = Sequential([
        Conv2D((3, 3), window, 32, "same", rng=rng), ReLU(),
        Conv2D((3, 3), 32, 64, "same", rng=rng), ReLU(),
        Conv2D((3, 3), 64, 96, "same", rng=rng), ReLU(),
        Conv2D((3, 3), 96, RD_EMBED_DIM, "same", rng=rng), ReLU(),
        GlobalAvgPool(),
    ], input_shape=(doppler_bins, range_bins, window))
    ddb_head = Sequential([
        Dropout(0.1), Dense(EMBED_DIM, 64, rng=rng), ReLU(),
        Dropout(0.1), Dense(64, len(DANGEROUS_LABELS), rng=rng), Softmax(),
    ], input_shape=(EMBED_DIM,))
    dvn_head = Sequential([
        Dropout(0.1), Dense(EMBED_DIM, 64, rng=rng), ReLU(),
        Dropout(0.1), Dense(64, 1, rng=rng), Sigmoid(),
    ], input_shape=(EMBED_DIM,))
    return ModelBundle(
        fe_rn_branch=rn_branch, fe_rd_branch=rd_branch,
        ddb_head=ddb_head, dvn_head=dvn_head,
        metadata={"seed": seed, "window": window, "fe_trained": False,
                  "classes": [lab.value for lab in DANGEROUS_LABELS]},
    )


# ---------------------------------------------------------------------------
# batching helpers
# ---------------------------------------------------------------------------


def _tensors(samples: list[StackedSample]) -> tuple[np.ndarray, np.ndarray]:
    rn = np.stack([s.rn for s in samples])
    rd = np.stack([s.rd for s in samples])
    return rn, rd


def embed(bundle: ModelBundle, rn: np.ndarray, rd: np.ndarray,
          train: bool = False, rng: np.random.Generator | None = None):
    """Concatenated branch embedding plus the caches needed for backward."""
    e_rn, c_rn = bundle.fe_rn_branch.forward(rn, train=train, rng=rng)
    e_rd, c_rd = bundle.fe_rd_branch.forward(rd, train=train, rng=rng)
    return np.concatenate([e_rn, e_rd], axis=1), (c_rn, c_rd)


def embed_samples(bundle: ModelBundle, samples: list[StackedSample],
                  chunk: int = 64) -> np.ndarray:
    """Evaluation-mode embeddings, chunked to bound peak memory."""
    parts = []
    for i in range(0, len(samples), chunk):
        rn, rd = _tensors(samples[i:i + chunk])
        emb, _ = embed(bundle, rn, rd, train=False)
        parts.append(emb)
    return np.concatenate(parts) if parts else np.zeros((0, EMBED_DIM))


def predict_ddb(bundle: ModelBundle,
                samples: list[StackedSample]) -> list[ActivityLabel]:
    """Evaluation-mode 9-way argmax labels for a sample list."""
    emb = embed_samples(bundle, samples)
    probs = bundle.ddb_head.predict(emb)
    return [DANGEROUS_LABELS[int(i)] for i in probs.argmax(axis=1)]


def _check_sample_shapes(bundle: ModelBundle, sample: StackedSample) -> None:
    if sample.rn.shape != bundle.fe_rn_branch.input_shape:
        raise ValueError(
            f"rn tensor {sample.rn.shape} does not match model input "
            f"{bundle.fe_rn_branch.input_shape}"
        )
    if sample.rd.shape != bundle.fe_rd_branch.input_shape:
        raise ValueError(
            f"rd tensor {sample.rd.shape} does not match model input "
            f"{bundle.fe_rd_branch.input_shape}"
        )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train_ddb(bundle: ModelBundle, train: list[StackedSample],
              val: list[StackedSample],
              config: TrainingConfig | None = None) -> list[dict]:
    """Jointly optimise both branches and the 9-way head on cross-entropy.

    Training stops early when the validation weighted F1 has not improved for
    ``patience`` epochs; the best-epoch parameters are restored. Returns the
    per-epoch history (train loss, validation weighted F1).
    """
    config = config or TrainingConfig()
    present = {s.label for s in train}
    missing = [lab.value for lab in DANGEROUS_LABELS if lab not in present]
    if missing:
        raise ValueError(f"training set lacks dangerous classes: {missing}")
    extra = [lab.value for lab in present if not lab.is_dangerous]
    if extra:
        raise ValueError(f"9-way training set must not contain: {extra}")

    rn_all, rd_all = _tensors(train)
    y_all = np.array([DANGEROUS_INDEX[s.label] for s in train])
    val_truth = [s.label for s in val]

    params = {}
    for prefix, net in (("rn", bundle.fe_rn_branch), ("rd", bundle.fe_rd_branch),
                        ("ddb", bundle.ddb_head)):
        for (i, name), arr in net.parameters().items():
            params[(prefix, i, name)] = arr
    optimizer = Adam(params, lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)

    history: list[dict] = []
    best_f1 = -1.0
    best_params = None
    stale = 0
    n_softmax = len(bundle.ddb_head.layers) - 1
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            emb, (c_rn, c_rd) = embed(bundle, rn_all[idx], rd_all[idx],
                                      train=True, rng=rng)
            probs, head_caches = bundle.ddb_head.forward(emb, train=True, rng=rng)
            loss, dlogits = cross_entropy(probs, y_all[idx])
            losses.append(loss)
            # inject the fused softmax+CE gradient below the final activation
            d_emb, g_head = bundle.ddb_head.backward(dlogits, head_caches,
                                                     from_layer=n_softmax - 1)
            _, g_rn = bundle.fe_rn_branch.backward(d_emb[:, :RN_EMBED_DIM], c_rn)
            _, g_rd = bundle.fe_rd_branch.backward(d_emb[:, RN_EMBED_DIM:], c_rd)
            grads = {("rn",) + k: g for k, g in g_rn.items()}
            grads.update({("rd",) + k: g for k, g in g_rd.items()})
            grads.update({("ddb",) + k: g for k, g in g_head.items()})
            optimizer.step(grads)

        if val:
            val_f1 = weighted_f1_score(predict_ddb(bundle, val), val_truth,
                                       classes=list(DANGEROUS_LABELS))
        else:
            val_f1 = float("nan")
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_weighted_f1": val_f1})
        if val:
            if val_f1 > best_f1 + 1e-12:
                best_f1 = val_f1
                best_params = {k: v.copy() for k, v in params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_params is not None:
        for key, value in best_params.items():
            params[key][...] = value
    bundle.metadata["fe_trained"] = True
    bundle.metadata["ddb_history_epochs"] = len(history)
    return history


def train_dvn(bundle: ModelBundle, train: list[StackedSample],
              val: list[StackedSample],
              config: TrainingConfig | None = None) -> list[dict]:
    """Train the binary gate on frozen feature embeddings.

    The branches are evaluated once (evaluation mode) and their outputs enter
    the gate as constants, which is the gradient stop: no update can reach a
    feature-extraction parameter, so those stay bit-identical. Classes are
    weight-balanced in the loss; early stopping tracks validation AUC.
    """
    config = config or TrainingConfig()
    if not bundle.fe_trained:
        raise RuntimeError("feature branches are untrained; run train_ddb first")
    y = np.array([1.0 if s.label.is_dangerous else 0.0 for s in train])
    if len(np.unique(y)) < 2:
        missing = "dangerous" if y.sum() == 0 else "normal"
        raise ValueError(f"binary training set lacks the {missing} class")

    emb_all = embed_samples(bundle, train)
    n_pos, n_neg = float(y.sum()), float(len(y) - y.sum())
    weights = np.where(y == 1.0, len(y) / (2.0 * n_pos), len(y) / (2.0 * n_neg))

    emb_val = embed_samples(bundle, val) if val else None
    y_val = np.array([1 if s.label.is_dangerous else 0 for s in val]) if val else None
    has_val_roc = val and y_val is not None and 0 < y_val.sum() < len(y_val)

    params = {(i, name): arr
              for (i, name), arr in bundle.dvn_head.parameters().items()}
    optimizer = Adam(params, lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed + 1)

    history: list[dict] = []
    best_auc = -1.0
    best_params = None
    stale = 0
    n_sigmoid = len(bundle.dvn_head.layers) - 1
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            p, caches = bundle.dvn_head.forward(emb_all[idx], train=True, rng=rng)
            loss, dlogit = binary_cross_entropy(p[:, 0], y[idx], weights[idx])
            losses.append(loss)
            _, grads = bundle.dvn_head.backward(dlogit[:, None], caches,
                                                from_layer=n_sigmoid - 1)
            optimizer.step(grads)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if has_val_roc:
            scores = bundle.dvn_head.predict(emb_val)[:, 0]
            _, auc = roc_curve(y_val, scores)
            entry["val_auc"] = auc
            history.append(entry)
            if auc > best_auc + 1e-12:
                best_auc = auc
                best_params = {k: v.copy() for k, v in params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
        else:
            history.append(entry)
    if best_params is not None:
        for key, value in best_params.items():
            params[key][...] = value
    bundle.metadata["dvn_trained"] = True
    return history


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


class VerdictKind(Enum):
    NORMAL = "normal"
    DANGEROUS = "dangerous"
    SUPPRESSED = "suppressed"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    dvn_score: float | None = None
    activity: ActivityLabel | None = None
    class_probs: np.ndarray | None = None
    reason: str | None = None


@dataclass
class CallCounters:
    """How often each stage actually ran; dangerous verdicts == ddb_calls."""

    dvn_calls: int = 0
    ddb_calls: int = 0


def infer(bundle: ModelBundle, sample: StackedSample,
          dvn_threshold: float = 0.5, bump_flag: bool = False,
          counters: CallCounters | None = None) -> Verdict:
    """Two-stage lazy classification of one normalised window.

    Bump-flagged windows are suppressed before any network runs. Otherwise
    the embedding is computed once; the 9-way head is evaluated only when the
    gate score reaches the threshold.
    """
    if bump_flag:
        return Verdict(kind=VerdictKind.SUPPRESSED, reason="bump")
    _check_sample_shapes(bundle, sample)
    emb, _ = embed(bundle, sample.rn[None], sample.rd[None], train=False)
    score = float(bundle.dvn_head.predict(emb)[0, 0])
    if counters is not None:
        counters.dvn_calls += 1
    if score < dvn_threshold:
        return Verdict(kind=VerdictKind.NORMAL, dvn_score=score)
    probs = bundle.ddb_head.predict(emb)[0]
    if counters is not None:
        counters.ddb_calls += 1
    winner = DANGEROUS_LABELS[int(probs.argmax())]
    return Verdict(kind=VerdictKind.DANGEROUS, dvn_score=score,
                   activity=winner, class_probs=probs)


# ---------------------------------------------------------------------------
# serialization (layout documented in docs/model_format.md)
# ---------------------------------------------------------------------------

BUNDLE_MAGIC = b"MMDRBNDL"
BUNDLE_VERSION = 1
_NETS = ("fe_rn", "fe_rd", "ddb", "dvn")


class BundleError(Exception):
    """Base class for model-file failures."""


class BundleVersionError(BundleError):
    pass


class BundleTruncatedError(BundleError):
    pass


class BundleFormatError(BundleError):
    pass


def _bundle_nets(bundle: ModelBundle) -> dict[str, Sequential]:
    return {"fe_rn": bundle.fe_rn_branch, "fe_rd": bundle.fe_rd_branch,
            "ddb": bundle.ddb_head, "dvn": bundle.dvn_head}


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write the single-file container: header, JSON manifest, raw payload."""
    nets = _bundle_nets(bundle)
    param_entries = []
    payload = bytearray()
    for net_name in _NETS:
        for (i, name), arr in nets[net_name].parameters().items():
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            param_entries.append({
                "net": net_name, "layer": i, "name": name,
                "shape": list(arr.shape), "offset": len(payload),
                "nbytes": len(raw),
            })
            payload.extend(raw)
    manifest = {
        "format_version": BUNDLE_VERSION,
        "metadata": bundle.metadata,
        "norm_stats": None if bundle.norm_stats is None else {
            "rn_min": bundle.norm_stats.rn_min, "rn_max": bundle.norm_stats.rn_max,
            "rd_min": bundle.norm_stats.rd_min, "rd_max": bundle.norm_stats.rd_max,
        },
        "networks": {name: network_to_spec(net) for name, net in nets.items()},
        "params": param_entries,
        "payload_nbytes": len(payload),
    }
    blob = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<II", BUNDLE_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_bundle(path) -> ModelBundle:
    """Read a container back; bit-exact parameters or a typed error."""
    data = Path(path).read_bytes()
    if len(data) < len(BUNDLE_MAGIC) + 8:
        raise BundleTruncatedError("file shorter than the bundle header")
    if data[: len(BUNDLE_MAGIC)] != BUNDLE_MAGIC:
        raise BundleFormatError("not a model bundle (bad magic)")
    version, manifest_len = struct.unpack_from("<II", data, len(BUNDLE_MAGIC))
    if version != BUNDLE_VERSION:
        raise BundleVersionError(
            f"bundle format version {version}, expected {BUNDLE_VERSION}"
        )
    manifest_start = len(BUNDLE_MAGIC) + 8
    payload_start = manifest_start + manifest_len
    if len(data) < payload_start:
        raise BundleTruncatedError("file ends inside the manifest")
    try:
        manifest = json.loads(data[manifest_start:payload_start])
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"manifest is not valid JSON: {exc}") from exc
    payload = data[payload_start:]
    declared = manifest.get("payload_nbytes", -1)
    if len(payload) < declared:
        raise BundleTruncatedError(
            f"payload has {len(payload)} of {declared} declared bytes"
        )
    if len(payload) != declared:
        raise BundleFormatError("payload larger than the manifest declares")

    try:
        nets = {name: network_from_spec(manifest["networks"][name])
                for name in _NETS}
    except (KeyError, ValueError, TypeError) as exc:
        raise BundleFormatError(f"bad network manifest: {exc}") from exc
    lookup = {(e["net"], e["layer"], e["name"]): e for e in manifest["params"]}
    for net_name in _NETS:
        for (i, name), arr in nets[net_name].parameters().items():
            entry = lookup.pop((net_name, i, name), None)
            if entry is None:
                raise BundleFormatError(f"manifest lacks parameter {net_name}/{i}/{name}")
            if tuple(entry["shape"]) != arr.shape \
                    or entry["nbytes"] != arr.size * 8 \
                    or entry["offset"] + entry["nbytes"] > len(payload):
                raise BundleFormatError(
                    f"parameter {net_name}/{i}/{name} disagrees with payload"
                )
            raw = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
            arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
    if lookup:
        raise BundleFormatError(f"payload contains unknown parameters: {list(lookup)}")

    stats = manifest.get("norm_stats")
    norm_stats = None if stats is None else NormStats(**stats)
    return ModelBundle(
        fe_rn_branch=nets["fe_rn"], fe_rd_branch=nets["fe_rd"],
        ddb_head=nets["ddb"], dvn_head=nets["dvn"],
        norm_stats=norm_stats, metadata=manifest.get("metadata", {}),
    )
