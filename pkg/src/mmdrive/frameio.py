"""Binary TLV wire format and JSON-lines dataset files.

The binary format follows commodity mmWave demo-firmware conventions and is
documented byte-for-byte in docs/formats.md:

  packet  = magic(8) | version u32 | total_length u32 | frame_number u32 |
            num_tlvs u32 | TLVs...
  TLV     = type u32 | length u32 | payload[length]

All integers little-endian. TLV type 2 carries the range profile, type 3 the
noise profile, type 5 the range-doppler heatmap (row-major, doppler rows).
Payload values are u16 fixed-point Q9 log2 magnitudes:

  u16 = round(dB / 6.0206 * 512), clamped to [0, 65535]

so one quantisation step is 6.0206/512 ~ 0.0118 dB. The decoder is total over
arbitrary byte streams: it scans for the magic word, validates every length
against the remaining bytes and resynchronises past corrupt packets.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .activities import ActivityLabel
from .dsp import RadarFrame

logger = logging.getLogger(__name__)

MAGIC = bytes([0x02, 0x01, 0x04, 0x03, 0x06, 0x05, 0x08, 0x07])
WIRE_VERSION = 1
HEADER_SIZE = len(MAGIC) + 16

TLV_RANGE_PROFILE = 2
TLV_NOISE_PROFILE = 3
TLV_RANGE_DOPPLER = 5

#: dB per Q9 unit: 20*log10(2), i.e. one factor of two in magnitude.
DB_PER_LOG2 = 6.0206
Q9_SCALE = 512.0
QUANT_STEP_DB = DB_PER_LOG2 / Q9_SCALE

_MAX_PACKET_BYTES = 1 << 20
_MAX_TLVS = 16


class WireError(Exception):
    """Base class for binary-stream decode failures."""


class NoMagicFoundError(WireError):
    """No sync word in the buffer; ``searched`` bytes are safe to discard."""

    def __init__(self, searched: int):
        super().__init__("no magic word found")
        self.searched = searched


class TruncatedPacketError(WireError):
    """Packet starts at ``at`` but needs more bytes; nothing consumed."""

    def __init__(self, at: int):
        super().__init__("incomplete packet, need more bytes")
        self.at = at


class CorruptPacketError(WireError):
    """Bounds violated; resume scanning at ``resume_offset``."""

    def __init__(self, message: str, resume_offset: int):
        super().__init__(message)
        self.resume_offset = resume_offset


def _db_to_u16(db: np.ndarray) -> np.ndarray:
    q = np.rint(np.asarray(db, dtype=np.float64) / DB_PER_LOG2 * Q9_SCALE)
    return np.clip(q, 0, 65535).astype("<u2")


def _u16_to_db(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) * QUANT_STEP_DB


def encode_frame(frame: RadarFrame) -> bytes:
    """Serialize one frame as a TLV packet (timestamps are not carried; the
    decoder reconstructs them from the frame number and frame period)."""
    payloads = [
        (TLV_RANGE_PROFILE, _db_to_u16(frame.range_profile).tobytes()),
        (TLV_NOISE_PROFILE, _db_to_u16(frame.noise_profile).tobytes()),
        (TLV_RANGE_DOPPLER, _db_to_u16(frame.range_doppler).tobytes()),
    ]
    body = b"".join(
        struct.pack("<II", tlv_type, len(payload)) + payload
        for tlv_type, payload in payloads
    )
    total_length = HEADER_SIZE + len(body)
    header = MAGIC + struct.pack(
        "<IIII", WIRE_VERSION, total_length, frame.frame_index, len(payloads)
    )
    return header + body


def decode_frame(buffer: bytes, frame_period: float = 0.2
                 ) -> tuple[RadarFrame, int]:
    """Decode the first packet in ``buffer``; returns (frame, bytes_consumed).

    Raises NoMagicFoundError / TruncatedPacketError / CorruptPacketError; all
    carry enough position information to resynchronise a stream.
    """
    start = buffer.find(MAGIC)
    if start < 0:
        raise NoMagicFoundError(searched=max(0, len(buffer) - len(MAGIC) + 1))
    if len(buffer) - start < HEADER_SIZE:
        raise TruncatedPacketError(at=start)
    version, total_length, frame_number, num_tlvs = struct.unpack_from(
        "<IIII", buffer, start + len(MAGIC)
    )
    resume = start + 1
    if version != WIRE_VERSION:
        raise CorruptPacketError(f"unsupported wire version {version}", resume)
    if not HEADER_SIZE <= total_length <= _MAX_PACKET_BYTES:
        raise CorruptPacketError(f"implausible packet length {total_length}", resume)
    if num_tlvs > _MAX_TLVS:
        raise CorruptPacketError(f"implausible TLV count {num_tlvs}", resume)
    if len(buffer) - start < total_length:
        raise TruncatedPacketError(at=start)

    end = start + total_length
    pos = start + HEADER_SIZE
    tlvs: dict[int, bytes] = {}
    for _ in range(num_tlvs):
        if end - pos < 8:
            raise CorruptPacketError("TLV header exceeds packet bounds", resume)
        tlv_type, tlv_len = struct.unpack_from("<II", buffer, pos)
        pos += 8
        if tlv_len > end - pos:
            raise CorruptPacketError("TLV payload exceeds packet bounds", resume)
        tlvs[tlv_type] = bytes(buffer[pos:pos + tlv_len])
        pos += tlv_len
    if pos != end:
        raise CorruptPacketError("total_length disagrees with TLV contents", resume)

    for required in (TLV_RANGE_PROFILE, TLV_NOISE_PROFILE, TLV_RANGE_DOPPLER):
        if required not in tlvs:
            raise CorruptPacketError(f"missing TLV type {required}", resume)
    rp_raw = tlvs[TLV_RANGE_PROFILE]
    np_raw = tlvs[TLV_NOISE_PROFILE]
    rd_raw = tlvs[TLV_RANGE_DOPPLER]
    if len(rp_raw) == 0 or len(rp_raw) % 2 or len(rp_raw) != len(np_raw):
        raise CorruptPacketError("profile TLV sizes invalid", resume)
    range_bins = len(rp_raw) // 2
    if len(rd_raw) % (2 * range_bins) or len(rd_raw) < 4 * range_bins:
        raise CorruptPacketError("range-doppler TLV size invalid", resume)
    doppler_bins = len(rd_raw) // (2 * range_bins)

    frame = RadarFrame(
        range_profile=_u16_to_db(np.frombuffer(rp_raw, dtype="<u2")),
        noise_profile=_u16_to_db(np.frombuffer(np_raw, dtype="<u2")),
        range_doppler=_u16_to_db(
            np.frombuffer(rd_raw, dtype="<u2")
        ).reshape(doppler_bins, range_bins),
        timestamp=frame_number * frame_period,
        frame_index=frame_number,
    )
    return frame, end


class StreamDecoder:
    """Incremental TLV-stream decoder, one instance per stream.

    Feed arbitrary byte chunks; complete frames come out in order. Garbage is
    skipped, corrupt packets are counted and resynchronised past; the decoder
    never raises on malformed input.
    """

    def __init__(self, frame_period: float = 0.2):
        self._buffer = bytearray()
        self._frame_period = frame_period
        self.frames_decoded = 0
        self.bytes_discarded = 0
        self.corrupt_packets = 0

    def feed(self, data: bytes) -> list[RadarFrame]:
        self._buffer.extend(data)
        frames: list[RadarFrame] = []
        while True:
            try:
                frame, consumed = decode_frame(bytes(self._buffer), self._frame_period)
            except NoMagicFoundError as err:
                self.bytes_discarded += err.searched
                del self._buffer[: err.searched]
                break
            except TruncatedPacketError as err:
                self.bytes_discarded += err.at
                del self._buffer[: err.at]
                break
            except CorruptPacketError as err:
                self.corrupt_packets += 1
                self.bytes_discarded += err.resume_offset
                del self._buffer[: err.resume_offset]
                continue
            frames.append(frame)
            self.frames_decoded += 1
            del self._buffer[:consumed]
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)


# ---------------------------------------------------------------------------
# JSON-lines dataset files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImuSample:
    """One accelerometer z-axis reading."""

    timestamp: float
    accel_z: float


@dataclass(frozen=True)
class DatasetRecord:
    """One radar frame with its nearest IMU reading and ground truth."""

    timestamp: float
    range_profile: np.ndarray
    noise_profile: np.ndarray
    range_doppler: np.ndarray
    imu_z: float
    label: ActivityLabel | None = None
    user: str | None = None


class RecordFormatError(ValueError):
    """A malformed dataset line; carries the line number and field name."""

    def __init__(self, message: str, line: int, field: str | None = None):
        detail = f"line {line}" + (f", field {field!r}" if field else "")
        super().__init__(f"{detail}: {message}")
        self.line = line
        self.field = field


def record_from_frame(frame: RadarFrame, imu_z: float,
                      label: ActivityLabel | None = None,
                      user: str | None = None) -> DatasetRecord:
    return DatasetRecord(
        timestamp=frame.timestamp,
        range_profile=np.asarray(frame.range_profile, dtype=np.float64),
        noise_profile=np.asarray(frame.noise_profile, dtype=np.float64),
        range_doppler=np.asarray(frame.range_doppler, dtype=np.float64),
        imu_z=imu_z,
        label=label,
        user=user,
    )


def frame_from_record(record: DatasetRecord, frame_index: int) -> RadarFrame:
    return RadarFrame(
        range_profile=record.range_profile,
        noise_profile=record.noise_profile,
        range_doppler=record.range_doppler,
        timestamp=record.timestamp,
        frame_index=frame_index,
    )


def _record_to_json(record: DatasetRecord) -> str:
    obj = {
        "timestamp": float(record.timestamp),
        "range_profile": np.asarray(record.range_profile, dtype=np.float64).tolist(),
        "noise_profile": np.asarray(record.noise_profile, dtype=np.float64).tolist(),
        "range_doppler": np.asarray(record.range_doppler, dtype=np.float64).tolist(),
        "imu_z": float(record.imu_z),
        "label": record.label.value if record.label is not None else None,
        "user": record.user,
    }
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _vector(obj: dict, key: str, length: int, line: int) -> np.ndarray:
    value = obj.get(key)
    if not isinstance(value, list) or len(value) != length:
        got = len(value) if isinstance(value, list) else type(value).__name__
        raise RecordFormatError(f"expected a {length}-element array, got {got}",
                                line, key)
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise RecordFormatError("non-finite value", line, key)
    return arr


def _parse_record(text: str, line: int) -> DatasetRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"invalid JSON: {exc.msg}", line) from exc
    if not isinstance(obj, dict):
        raise RecordFormatError("expected a JSON object", line)
    missing = {"timestamp", "range_profile", "noise_profile",
               "range_doppler", "imu_z"} - obj.keys()
    if missing:
        raise RecordFormatError(f"missing fields {sorted(missing)}", line)
    rp = _vector(obj, "range_profile", 64, line)
    npf = _vector(obj, "noise_profile", 64, line)
    rd = obj.get("range_doppler")
    if not isinstance(rd, list) or len(rd) != 16 \
            or any(not isinstance(row, list) or len(row) != 64 for row in rd):
        raise RecordFormatError("expected a 16x64 matrix", line, "range_doppler")
    rd_arr = np.asarray(rd, dtype=np.float64)
    if not np.all(np.isfinite(rd_arr)):
        raise RecordFormatError("non-finite value", line, "range_doppler")
    label_name = obj.get("label")
    label = None
    if label_name is not None:
        try:
            label = ActivityLabel.from_name(str(label_name))
        except ValueError as exc:
            raise RecordFormatError(str(exc), line, "label") from exc
    try:
        return DatasetRecord(
            timestamp=float(obj["timestamp"]),
            range_profile=rp,
            noise_profile=npf,
            range_doppler=rd_arr,
            imu_z=float(obj["imu_z"]),
            label=label,
            user=obj.get("user"),
        )
    except (TypeError, ValueError) as exc:
        raise RecordFormatError(str(exc), line) from exc


def _open_sink(sink) -> tuple[IO[str], bool]:
    if isinstance(sink, (str, Path)):
        return open(sink, "w", encoding="utf-8"), True
    return sink, False


def write_jsonl(records: Iterable[DatasetRecord], sink) -> int:
    """Write records one JSON object per line; returns the record count."""
    fh, owned = _open_sink(sink)
    count = 0
    try:
        for record in records:
            fh.write(_record_to_json(record))
            fh.write("\n")
            count += 1
    finally:
        if owned:
            fh.close()
    return count


def read_jsonl(source, strict: bool = True) -> Iterator[DatasetRecord]:
    """Stream records from a dataset file or file object.

    In strict mode (default) a malformed line aborts with RecordFormatError;
    in lenient mode it is logged with its line number and skipped.
    """
    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8")
        owned = True
    else:
        fh, owned = source, False
    try:
        for line_number, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                yield _parse_record(text, line_number)
            except RecordFormatError as err:
                if strict:
                    raise
                logger.warning("skipping bad record: %s", err)
    finally:
        if owned:
            fh.close()


def write_imu_jsonl(samples: Iterable[ImuSample], sink) -> int:
    """IMU sidecar: one {"timestamp", "accel_z"} object per line."""
    fh, owned = _open_sink(sink)
    count = 0
    try:
        for s in samples:
            fh.write(json.dumps(
                {"timestamp": float(s.timestamp), "accel_z": float(s.accel_z)},
                separators=(",", ":"), allow_nan=False))
            fh.write("\n")
            count += 1
    finally:
        if owned:
            fh.close()
    return count


def read_imu_jsonl(source) -> list[ImuSample]:
    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8")
        owned = True
    else:
        fh, owned = source, False
    samples: list[ImuSample] = []
    try:
        for line_number, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
                samples.append(ImuSample(timestamp=float(obj["timestamp"]),
                                         accel_z=float(obj["accel_z"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RecordFormatError(f"bad IMU sample: {exc}", line_number) from exc
    finally:
        if owned:
            fh.close()
    return samples
