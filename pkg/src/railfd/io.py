"""File formats: WLC1 measurement files, dataset manifests and CSV outputs.

WLC1 layout (little-endian)::

    b"WLC1"  u32 record_count
    per record: u64 timestamp_s, u32 wheel_id, u32 checkpoint_id,
                f32 speed, f32 load,
                8 x (u32 length, length x f32)
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

WLC_MAGIC = b"WLC1"
MANIFEST_FORMAT = "railfd-dataset"
MANIFEST_VERSION = 1
_RECORD_HEAD = struct.Struct("<QIIff")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def encode_measurements(measurements) -> bytes:
    parts = [WLC_MAGIC, struct.pack("<I", len(measurements))]
    for m in measurements:
        if len(m.segments) != 8:
            raise FormatError(f"wheel {m.wheel_id} @ {m.timestamp}: expected 8 segments, got {len(m.segments)}")
        parts.append(_RECORD_HEAD.pack(int(m.timestamp), int(m.wheel_id), int(m.checkpoint_id), m.speed, m.load))
        for seg in m.segments:
            seg = np.ascontiguousarray(seg, dtype="<f4")
            parts.append(struct.pack("<I", seg.size))
            parts.append(seg.tobytes())
    return b"".join(parts)


def decode_measurements(buf: bytes):
    from .signal_prep import Measurement

    if buf[:4] != WLC_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {WLC_MAGIC!r}")
    (count,) = struct.unpack_from("<I", buf, 4)
    offset = 8
    out = []
    try:
        for _ in range(count):
            ts, wheel, cp, speed, load = _RECORD_HEAD.unpack_from(buf, offset)
            offset += _RECORD_HEAD.size
            segs = []
            for _ in range(8):
                (n,) = struct.unpack_from("<I", buf, offset)
                offset += 4
                if offset + 4 * n > len(buf):
                    raise FormatError("truncated segment data")
                segs.append(np.frombuffer(buf, dtype="<f4", count=n, offset=offset).astype(np.float32))
                offset += 4 * n
            out.append(Measurement(wheel, cp, ts, float(speed), float(load), tuple(segs)))
    except struct.error as exc:
        raise FormatError(f"truncated WLC1 file: {exc}") from exc
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes in WLC1 file")
    return out


def write_measurements(path, measurements) -> None:
    atomic_write_bytes(Path(path), encode_measurements(measurements))


def read_measurements(path):
    return decode_measurements(Path(path).read_bytes())


def write_health_csv(path, rows) -> None:
    """rows: iterable of (wheel_id, timestamp, detector, value)."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["wheel_id", "timestamp", "detector", "value"])
    for wheel, ts, det, val in rows:
        w.writerow([int(wheel), int(ts), det, repr(float(val))])
    atomic_write_text(Path(path), buf.getvalue())


def read_health_csv(path) -> list[tuple[int, int, str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["wheel_id", "timestamp", "detector", "value"]:
            raise FormatError(f"{path}: unexpected header {reader.fieldnames}")
        return [(int(r["wheel_id"]), int(r["timestamp"]), r["detector"], float(r["value"])) for r in reader]


def write_loss_history_csv(path, history) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mean_loss", "active_triplet_fraction"])
    for rec in history:
        w.writerow([rec.epoch, repr(rec.mean_loss), repr(rec.active_fraction)])
    atomic_write_text(Path(path), buf.getvalue())


# -- dataset manifests ------------------------------------------------------

def _fault_dict(fault):
    if fault is None:
        return None
    return {"kind": fault.kind, "onset_day": fault.onset_day, "manifest_day": fault.manifest_day}


def _annotation_dict(ann):
    if ann is None:
        return None
    return {"origin": ann.origin, "onset_day": ann.onset_day, "manifest_day": ann.manifest_day, "end_day": ann.end_day}


def write_dataset(root, dataset) -> Path:
    """Write one WLC1 file per wheel plus ``manifest.json``; returns the manifest path.

    The manifest records the split, workshop visits, fault assignment and
    ground-truth zone annotation of every wheel.
    """
    root = Path(root)
    wheels = []
    for tl in dataset.timelines:
        rel = f"measurements/wheel_{tl.wheel_id:04d}.wlc"
        write_measurements(root / rel, tl.measurements)
        wheels.append({
            "wheel_id": tl.wheel_id,
            "split": tl.split,
            "file": rel,
            "records": len(tl.measurements),
            "visits": [int(v) for v in tl.visits],
            "fault": _fault_dict(tl.fault),
            "annotation": _annotation_dict(tl.annotation),
        })
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "seed": int(dataset.seed),
        "fleet": dataset.config.to_dict(),
        "wheels": wheels,
    }
    path = root / "manifest.json"
    write_json(path, manifest)
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"no dataset manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if manifest.get("format") != MANIFEST_FORMAT or manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: not a {MANIFEST_FORMAT} v{MANIFEST_VERSION} manifest")
    for w in manifest["wheels"]:
        if w["split"] == "train" and w["fault"] is not None:
            raise FormatError(f"{path}: training wheel {w['wheel_id']} carries a fault annotation")
    manifest["_root"] = str(path.parent)
    return manifest


def read_dataset(path):
    """Load a dataset written by :func:`write_dataset` back into a FleetDataset."""
    from .wheelsim import FaultAssignment, FleetConfig, FleetDataset, WheelTimeline, ZoneAnnotation

    manifest = read_manifest(path)
    root = Path(manifest["_root"])
    cfg = FleetConfig(**manifest["fleet"])
    timelines = []
    for w in manifest["wheels"]:
        ms = read_measurements(root / w["file"])
        if len(ms) != w["records"]:
            raise FormatError(f"wheel {w['wheel_id']}: manifest lists {w['records']} records, file has {len(ms)}")
        if any(m.wheel_id != w["wheel_id"] for m in ms):
            raise FormatError(f"{w['file']}: records belong to another wheel")
        fault = FaultAssignment(w["wheel_id"], **w["fault"]) if w["fault"] else None
        ann = ZoneAnnotation(**w["annotation"]) if w["annotation"] else None
        timelines.append(WheelTimeline(w["wheel_id"], ms, list(w["visits"]), w["split"], fault, ann))
    return FleetDataset(cfg, manifest["seed"], timelines)


# -- prepared signals -------------------------------------------------------

def write_prepared(path, signals, wheel_ids, timestamps, splits) -> None:
    """Prepared signals plus per-row wheel id, timestamp and split (0 train, 1 test)."""
    buf = _io.BytesIO()
    np.savez(buf, signals=np.asarray(signals, dtype=np.float32), wheel_ids=np.asarray(wheel_ids, dtype=np.int64),
             timestamps=np.asarray(timestamps, dtype=np.int64), splits=np.asarray(splits, dtype=np.int8))
    atomic_write_bytes(Path(path), buf.getvalue())


def read_prepared(path) -> dict:
    try:
        with np.load(Path(path)) as z:
            out = {k: z[k] for k in ("signals", "wheel_ids", "timestamps", "splits")}
    except FileNotFoundError:
        raise FormatError(f"no prepared signals at {path}; run `prep` first") from None
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad prepared-signal archive ({exc})") from exc
    return out
