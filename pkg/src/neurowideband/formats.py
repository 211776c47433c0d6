"""On-disk dataset containers.

NWBD binary layout (all little-endian)::

    header   b"NWBD" | u16 version | u64 record count
    record   f64 center_hz | f64 spacing_hz | u32 count | u32 antenna | f64 timestamp
             | u32 label byte length | label (utf-8)
             | count x (f64 real, f64 imag)

The JSON-lines mirror carries the same fields, one record per line after a
header line, for inspection.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .channel import CsiFrame, FrequencyGrid
from .data import DatasetRecord

MAGIC = b"NWBD"
FORMAT_VERSION = 1
JSONL_FORMAT = "NWBD-JSONL"

_HEADER = struct.Struct("<4sHQ")
_RECORD = struct.Struct("<ddIIdI")


class DatasetFormatError(Exception):
    """Base class for dataset decoding failures."""


class DatasetVersionError(DatasetFormatError):
    pass


class DatasetTruncatedError(DatasetFormatError):
    pass


class DatasetSchemaError(DatasetFormatError):
    pass


def _as_records(records) -> list[DatasetRecord]:
    out = []
    for r in records:
        if isinstance(r, CsiFrame):
            r = DatasetRecord(r)
        if not isinstance(r, DatasetRecord):
            raise TypeError(f"expected DatasetRecord or CsiFrame, got {type(r).__name__}")
        out.append(r)
    return out


def encode_dataset(records: Iterable) -> bytes:
    records = _as_records(records)
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(records))]
    for rec in records:
        fr = rec.frame
        label = rec.env_label.encode("utf-8")
        chunks.append(_RECORD.pack(fr.grid.center_freq, fr.grid.subcarrier_spacing,
                                   fr.grid.num_subcarriers, fr.antenna, fr.timestamp, len(label)))
        chunks.append(label)
        inter = np.empty(2 * len(fr), dtype="<f8")
        inter[0::2] = fr.values.real
        inter[1::2] = fr.values.imag
        chunks.append(inter.tobytes())
    return b"".join(chunks)


def decode_dataset(buf: bytes) -> list[DatasetRecord]:
    if len(buf) < _HEADER.size:
        raise DatasetTruncatedError("file shorter than the NWBD header")
    magic, version, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DatasetSchemaError(f"bad magic {magic!r}, not an NWBD file")
    if version != FORMAT_VERSION:
        raise DatasetVersionError(f"NWBD version {version} unsupported (expected {FORMAT_VERSION})")
    pos = _HEADER.size
    records = []
    for i in range(count):
        if pos + _RECORD.size > len(buf):
            raise DatasetTruncatedError(f"record {i} header truncated")
        center, spacing, n, antenna, ts, label_len = _RECORD.unpack_from(buf, pos)
        pos += _RECORD.size
        end = pos + label_len + 16 * n
        if end > len(buf):
            raise DatasetTruncatedError(f"record {i} payload truncated")
        try:
            label = buf[pos:pos + label_len].decode("utf-8")
            pos += label_len
            inter = np.frombuffer(buf, dtype="<f8", count=2 * n, offset=pos)
            pos = end
            grid = FrequencyGrid(center, spacing, n)
            frame = CsiFrame(grid, inter[0::2] + 1j * inter[1::2], antenna, ts)
        except (ValueError, UnicodeDecodeError) as exc:
            raise DatasetSchemaError(f"record {i}: {exc}") from exc
        records.append(DatasetRecord(frame, label))
    if pos != len(buf):
        raise DatasetSchemaError(f"{len(buf) - pos} trailing bytes after {count} records")
    return records


def write_dataset(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(records))
    return path


def read_dataset(path) -> list[DatasetRecord]:
    return decode_dataset(Path(path).read_bytes())


def write_jsonl(path, records) -> Path:
    records = _as_records(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({"format": JSONL_FORMAT, "version": FORMAT_VERSION,
                             "count": len(records)}) + "\n")
        for rec in records:
            fr = rec.frame
            fh.write(json.dumps({
                "center_hz": fr.grid.center_freq,
                "spacing_hz": fr.grid.subcarrier_spacing,
                "num_subcarriers": fr.grid.num_subcarriers,
                "antenna": fr.antenna,
                "timestamp": fr.timestamp,
                "label": rec.env_label,
                "real": fr.values.real.tolist(),
                "imag": fr.values.imag.tolist(),
            }) + "\n")
    return path


_JSONL_KEYS = {"center_hz", "spacing_hz", "num_subcarriers", "antenna", "timestamp", "label",
               "real", "imag"}


def read_jsonl(path) -> list[DatasetRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DatasetTruncatedError("empty JSONL file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetSchemaError(f"bad header line: {exc}") from exc
    if header.get("format") != JSONL_FORMAT:
        raise DatasetSchemaError("not an NWBD JSONL mirror")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetVersionError(f"JSONL version {header.get('version')} unsupported")
    body = lines[1:]
    if len(body) < header["count"]:
        raise DatasetTruncatedError(f"expected {header['count']} records, found {len(body)}")
    if len(body) > header["count"]:
        raise DatasetSchemaError("more records than the header declares")
    records = []
    for i, line in enumerate(body):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetTruncatedError(f"record {i} is not complete JSON") from exc
        if set(obj) != _JSONL_KEYS:
            raise DatasetSchemaError(f"record {i} keys {sorted(obj)} do not match schema")
        try:
            grid = FrequencyGrid(obj["center_hz"], obj["spacing_hz"], obj["num_subcarriers"])
            values = np.asarray(obj["real"], dtype=np.float64) + 1j * np.asarray(obj["imag"], dtype=np.float64)
            frame = CsiFrame(grid, values, obj["antenna"], obj["timestamp"])
        except (ValueError, TypeError) as exc:
            raise DatasetSchemaError(f"record {i}: {exc}") from exc
        records.append(DatasetRecord(frame, obj["label"]))
    return records


def load_records(path) -> list[DatasetRecord]:
    """Read either container, dispatching on the file suffix."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return read_jsonl(path)
    return read_dataset(path)


def save_records(path, records) -> Path:
    path = Path(path)
    if path.suffix == ".jsonl":
        return write_jsonl(path, records)
    return write_dataset(path, records)


def content_hash(path) -> str:
    """sha256 of a file, or of every file under a directory in sorted order."""
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        if path.is_dir():
            h.update(str(p.relative_to(path)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()
