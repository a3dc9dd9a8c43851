"""Command-line entry point: simulate, train, infer, eval, sweep.

Exit codes: 0 success, 1 usage, 2 data error (unreadable/invalid inputs),
3 runtime error. The MMDRIVE_LOG environment variable sets the log level
(DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import __version__
from .activities import ActivityLabel
from .evaluate import SplitSpec, compute_metrics, frame_stack_sweep
from .frameio import (DatasetRecord, RecordFormatError, StreamDecoder,
                      frame_from_record, read_imu_jsonl, read_jsonl,
                      record_from_frame, write_imu_jsonl, write_jsonl)
from .models import (BundleError, TrainingConfig, Verdict, infer as infer_window,
                     load_bundle, save_bundle)
from .pipeline import (prepare_samples, records_to_frames, simulate_dataset,
                       train_pipeline)
from .preprocess import apply_norm, detect_bumps, in_any_interval, window_sample
from .radar import RadarConfig
from .simulate import ScriptError, parse_drive_script
from .streaming import run_stream

logger = logging.getLogger("mmdrive")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError,
                ScriptError, RecordFormatError, BundleError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _float_list(text: str) -> list[float]:
    if not text.strip():
        return []
    return [float(part) for part in text.split(",")]


def _load_radar_config(path: str | None) -> RadarConfig:
    if path is None:
        return RadarConfig()
    with open(path, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ValueError("radar config file must hold a JSON object")
    known = {f.name for f in dataclass_fields(RadarConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown radar config keys: {sorted(unknown)}")
    return RadarConfig(**overrides)


def _imu_sidecar(data_path: str) -> Path:
    path = Path(data_path)
    return path.with_name(path.name.replace(".jsonl", "") + ".imu.jsonl")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _load_radar_config(args.config)
    script = parse_drive_script(Path(args.script).read_text(encoding="utf-8"))
    snr = None if args.snr == float("inf") else args.snr
    frames, labels, imu = simulate_dataset(script, config, seed=args.seed,
                                           bump_times=args.bump_times,
                                           snr_db=snr)
    imu_t = np.array([s.timestamp for s in imu])
    imu_z = np.array([s.accel_z for s in imu])
    records = []
    for frame, label in zip(frames, labels):
        nearest = int(np.clip(np.searchsorted(imu_t, frame.timestamp), 0, len(imu_t) - 1))
        if nearest > 0 and abs(imu_t[nearest - 1] - frame.timestamp) \
                <= abs(imu_t[nearest] - frame.timestamp):
            nearest -= 1
        records.append(record_from_frame(frame, imu_z[nearest], label, args.user))
    write_jsonl(records, args.out)
    write_imu_jsonl(imu, _imu_sidecar(args.out))
    logger.info("wrote %d frames to %s (+ IMU sidecar)", len(records), args.out)
    return EXIT_OK


def _read_dataset(path: str) -> list[DatasetRecord]:
    return list(read_jsonl(path, strict=True))


def cmd_train(args) -> int:
    records = _read_dataset(args.data)
    frames, labels, embedded_imu = records_to_frames(records)
    if any(label is None for label in labels):
        raise ValueError("training data must be fully labelled")
    sidecar = Path(args.imu) if args.imu else _imu_sidecar(args.data)
    imu = read_imu_jsonl(sidecar) if sidecar.exists() else embedded_imu
    training = TrainingConfig(lr=args.lr, batch_size=args.batch,
                              epochs=args.epochs, seed=args.seed)
    result = train_pipeline(frames, labels, imu=imu, window=args.window,
                            train_stride=args.stride,
                            split_spec=SplitSpec(seed=args.seed),
                            training=training, bump_k=args.bump_k)
    save_bundle(result.bundle, args.out)
    history_path = args.history or (str(args.out) + ".history.csv")
    with open(history_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "train_loss", "val_metric"])
        for row in result.ddb_history:
            writer.writerow(["ddb", row["epoch"], f"{row['train_loss']:.6f}",
                             f"{row.get('val_weighted_f1', float('nan')):.6f}"])
        for row in result.dvn_history:
            writer.writerow(["dvn", row["epoch"], f"{row['train_loss']:.6f}",
                             f"{row.get('val_auc', float('nan')):.6f}"])
    logger.info("model saved to %s, history to %s", args.out, history_path)
    return EXIT_OK


def _verdict_json(timestamp: float, verdict: Verdict) -> str:
    return json.dumps({
        "t": round(timestamp, 6),
        "verdict": verdict.kind.value,
        "class": verdict.activity.value if verdict.activity else None,
        "dvn_score": None if verdict.dvn_score is None else round(verdict.dvn_score, 6),
        "probs": None if verdict.class_probs is None
        else [round(float(p), 6) for p in verdict.class_probs],
    }, separators=(",", ":"))


def _frame_source(args, frame_period: float):
    """Yield RadarFrames from a jsonl path, binary path, or stdin ('-')."""
    fmt = args.format
    if fmt == "auto":
        fmt = "jsonl" if str(args.input).endswith(".jsonl") else "binary"
    if fmt == "jsonl":
        if args.input == "-":
            source = sys.stdin
        else:
            source = args.input
        for i, record in enumerate(read_jsonl(source, strict=False)):
            yield frame_from_record(record, int(round(record.timestamp / frame_period)))
        return
    fh = sys.stdin.buffer if args.input == "-" else open(args.input, "rb")
    decoder = StreamDecoder(frame_period)
    try:
        while True:
            chunk = fh.read(4096)
            if not chunk:
                break
            for frame in decoder.feed(chunk):
                yield frame
        if decoder.corrupt_packets:
            logger.warning("skipped %d corrupt packet(s)", decoder.corrupt_packets)
    finally:
        if fh is not sys.stdin.buffer:
            fh.close()


def cmd_infer(args) -> int:
    bundle = load_bundle(args.model)
    if bundle.norm_stats is None:
        raise ValueError("model bundle lacks normalisation statistics")
    bumps = []
    if args.imu:
        bumps = detect_bumps(read_imu_jsonl(args.imu), k=args.bump_k)
    frames = _frame_source(args, frame_period=0.2)
    out = sys.stdout

    if args.stream:
        # pace file replays at the frame period so a capture behaves like a
        # live feed; true live input ('-') is already timed by arrival
        pace = None if (args.input == "-" or args.no_pace) else 0.2
        stats = run_stream(
            frames, bundle, dvn_threshold=args.dvn_threshold,
            bump_intervals=bumps, pace_seconds=pace,
            on_verdict=lambda frame, verdict: print(
                _verdict_json(frame.timestamp, verdict), file=out),
        )
        print(
            f"frames_in={stats.frames_in} dropped={stats.frames_dropped} "
            f"verdicts={stats.verdicts} suppressed={stats.suppressed} "
            f"dvn_calls={stats.counters.dvn_calls} ddb_calls={stats.counters.ddb_calls} "
            f"latency_p50_ms={stats.latency_quantile(0.5):.1f} "
            f"latency_p95_ms={stats.latency_quantile(0.95):.1f}",
            file=sys.stderr,
        )
        return EXIT_OK

    from collections import deque

    from .models import CallCounters
    window = bundle.window
    rolling: deque = deque(maxlen=window)
    counters = CallCounters()
    emitted = suppressed = 0
    for frame in frames:
        rolling.append(frame)
        if len(rolling) < window:
            continue
        chunk = list(rolling)
        bump_flag = any(in_any_interval(f.timestamp, bumps) for f in chunk)
        sample = window_sample(chunk)
        if not bump_flag:
            sample = apply_norm(sample, bundle.norm_stats)
        verdict = infer_window(bundle, sample, args.dvn_threshold,
                               bump_flag=bump_flag, counters=counters)
        suppressed += verdict.kind.value == "suppressed"
        print(_verdict_json(frame.timestamp, verdict), file=out)
        emitted += 1
    print(f"verdicts={emitted} suppressed={suppressed} "
          f"dvn_calls={counters.dvn_calls} ddb_calls={counters.ddb_calls}",
          file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = load_bundle(args.model)
    records = _read_dataset(args.data)
    frames, labels, embedded_imu = records_to_frames(records)
    if any(label is None for label in labels):
        raise ValueError("evaluation data must be fully labelled")
    sidecar = Path(args.imu) if args.imu else _imu_sidecar(args.data)
    imu = read_imu_jsonl(sidecar) if sidecar.exists() else embedded_imu
    seed = args.seed if args.seed is not None else bundle.metadata.get("split_seed", 0)
    prepared = prepare_samples(frames, labels, imu=imu, window=bundle.window,
                               split_spec=SplitSpec(seed=seed),
                               bump_k=args.bump_k)

    from .models import predict_ddb
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    test_dangerous = [s for s in prepared.test if s.label.is_dangerous]
    ddb_report = None
    if test_dangerous:
        predictions = predict_ddb(bundle, test_dangerous)
        ddb_report = compute_metrics(predictions, [s.label for s in test_dangerous])
        _write_metrics_report(report_dir / "ddb_metrics", ddb_report)
    from .models import embed_samples
    scores = bundle.dvn_head.predict(embed_samples(bundle, prepared.test))[:, 0]
    binary_truth = [1 if s.label.is_dangerous else 0 for s in prepared.test]
    binary_pred = [1 if s >= args.dvn_threshold else 0 for s in scores]
    dvn_report = compute_metrics(binary_pred, binary_truth, positive_scores=scores)
    _write_metrics_report(report_dir / "dvn_metrics", dvn_report)
    summary = {
        "ddb_weighted_f1": None if ddb_report is None else ddb_report.weighted_f1,
        "ddb_accuracy": None if ddb_report is None else ddb_report.accuracy,
        "dvn_auc": dvn_report.auc,
        "dvn_weighted_f1": dvn_report.weighted_f1,
        "test_windows": len(prepared.test),
    }
    (report_dir / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _write_metrics_report(stem: Path, report) -> None:
    with open(f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for cls, p, r, f1, sup in zip(report.classes, report.precision,
                                      report.recall, report.f1, report.support):
            name = cls.value if isinstance(cls, ActivityLabel) else cls
            writer.writerow([name, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}", int(sup)])
        writer.writerow(["overall_weighted_f1", "", "", f"{report.weighted_f1:.6f}",
                         int(report.support.sum())])
    np.savetxt(f"{stem}_confusion.csv", report.confusion, fmt="%d", delimiter=",")
    if report.roc_points is not None:
        with open(f"{stem}_roc.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            writer.writerows(f"{x:.6f} {y:.6f}".split() for x, y in report.roc_points)


def cmd_sweep(args) -> int:
    records = _read_dataset(args.data)
    frames, labels, _ = records_to_frames(records)
    if any(label is None for label in labels):
        raise ValueError("sweep data must be fully labelled")
    windows = range(args.min_window, args.max_window + 1)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    result = frame_stack_sweep(frames, labels, windows, seed=args.seed,
                               epochs=args.epochs, train_stride=args.stride,
                               csv_path=report_dir / "frame_stack_sweep.csv",
                               batch_size=args.batch)
    print(f"best window: {result.best_window}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="mmdrive",
                     description="FMCW driver-activity sensing toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesise a scripted drive to JSONL")
    sim.add_argument("script", help="drive script: 'activity, start, duration' per line")
    sim.add_argument("out", help="output dataset (.jsonl); IMU sidecar written next to it")
    sim.add_argument("--config", help="radar config JSON overrides")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--snr", type=float, default=20.0,
                     help="per-sample SNR in dB (inf for noiseless)")
    sim.add_argument("--bump-times", type=_float_list, default=[],
                     help="comma-separated road-bump times in seconds")
    sim.add_argument("--user", default=None, help="user tag stored per record")
    sim.set_defaults(func=cmd_simulate)

    train = sub.add_parser("train", help="train the fused model on a dataset")
    train.add_argument("data", help="labelled dataset (.jsonl)")
    train.add_argument("out", help="output model bundle path")
    train.add_argument("--imu", help="IMU sidecar (.imu.jsonl); defaults to sibling file")
    train.add_argument("--history", help="training history CSV path")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--epochs", type=_positive_int, default=100)
    train.add_argument("--batch", type=_positive_int, default=32)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--window", type=_positive_int, default=10)
    train.add_argument("--stride", type=_positive_int, default=1)
    train.add_argument("--bump-k", type=float, default=5.0)
    train.set_defaults(func=cmd_train)

    inf = sub.add_parser("infer", help="classify windows from a dataset or binary stream")
    inf.add_argument("model", help="trained model bundle")
    inf.add_argument("input", help="input .jsonl, binary capture, or '-' for stdin")
    inf.add_argument("--format", choices=["auto", "jsonl", "binary"], default="auto")
    inf.add_argument("--stream", action="store_true",
                     help="bounded-queue streaming mode")
    inf.add_argument("--no-pace", action="store_true",
                     help="stream a capture file as fast as possible "
                          "(frames may drop when the queue fills)")
    inf.add_argument("--imu", help="IMU sidecar for bump suppression")
    inf.add_argument("--dvn-threshold", type=float, default=0.5)
    inf.add_argument("--bump-k", type=float, default=5.0)
    inf.set_defaults(func=cmd_infer)

    ev = sub.add_parser("eval", help="report metrics for a trained model")
    ev.add_argument("model")
    ev.add_argument("data")
    ev.add_argument("report_dir")
    ev.add_argument("--imu")
    ev.add_argument("--seed", type=int, default=None,
                    help="split seed; defaults to the seed stored in the bundle")
    ev.add_argument("--dvn-threshold", type=float, default=0.5)
    ev.add_argument("--bump-k", type=float, default=5.0)
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="frame-stacking sweep")
    sw.add_argument("data")
    sw.add_argument("report_dir")
    sw.add_argument("--min-window", type=_positive_int, default=1)
    sw.add_argument("--max-window", type=_positive_int, default=16)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--epochs", type=_positive_int, default=20)
    sw.add_argument("--batch", type=_positive_int, default=32)
    sw.add_argument("--stride", type=_positive_int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MMDRIVE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as err:
        logger.error("%s", err)
        print(f"mmdrive: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as err:  # noqa: BLE001 - CLI boundary
        logger.exception("unhandled failure")
        print(f"mmdrive: runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
