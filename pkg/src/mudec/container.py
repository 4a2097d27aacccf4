"""MDC1 binary signal container and CSV import.

Layout (little-endian)::

    b"MDC1"                 magic
    u16                     version (1)
    u32                     channel count C
    u64                     sample count N
    f64                     sample rate (Hz)
    u8                      units tag
    C x (u16 len, utf-8)    channel labels
    C*N x f32               payload, row-major (channel by channel)
    u32                     CRC32 of every preceding byte
"""

from __future__ import annotations

import csv
import struct
import zlib
from pathlib import Path

import numpy as np

from .dsp import MultiChannelSignal, Units
from .errors import ContainerError, DataError

MAGIC = b"MDC1"
VERSION = 1
_HEADER = struct.Struct("<4sHIQdB")
_UNIT_TAGS = {Units.VOLTS: 0, Units.NEWTONS: 1, Units.PERCENT_MVF: 2, Units.DIMENSIONLESS: 3}
_TAG_UNITS = {v: k for k, v in _UNIT_TAGS.items()}


def encode(sig: MultiChannelSignal) -> bytes:
    c, n = sig.data.shape
    parts = [_HEADER.pack(MAGIC, VERSION, c, n, float(sig.sample_rate_hz), _UNIT_TAGS[sig.units])]
    for label in sig.channel_labels:
        raw = label.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.ascontiguousarray(sig.data, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(buf: bytes, source: str = "<bytes>") -> MultiChannelSignal:
    if len(buf) < _HEADER.size + 4:
        raise ContainerError(f"{source}: truncated container ({len(buf)} bytes)")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ContainerError(f"{source}: CRC mismatch")
    magic, version, c, n, rate, tag = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise ContainerError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"{source}: unsupported version {version}")
    if tag not in _TAG_UNITS:
        raise ContainerError(f"{source}: unknown units tag {tag}")
    pos = _HEADER.size
    labels = []
    for _ in range(c):
        if pos + 2 > len(body):
            raise ContainerError(f"{source}: truncated label block")
        (ln,) = struct.unpack_from("<H", body, pos)
        labels.append(body[pos + 2 : pos + 2 + ln].decode("utf-8"))
        pos += 2 + ln
    payload = body[pos:]
    if len(payload) != 4 * c * n:
        raise ContainerError(f"{source}: payload has {len(payload)} bytes, header declares {4 * c * n}")
    data = np.frombuffer(payload, dtype="<f4").reshape(c, n).astype(np.float64)
    return MultiChannelSignal(data, rate, labels, _TAG_UNITS[tag])


def write_signal(path, sig: MultiChannelSignal) -> int:
    """Write ``sig`` to ``path``; returns the file's CRC32."""
    buf = encode(sig)
    path = Path(path)
    try:
        path.write_bytes(buf)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return struct.unpack("<I", buf[-4:])[0]


def read_signal(path) -> MultiChannelSignal:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return decode(buf, str(path))


def file_crc(path) -> int:
    return struct.unpack("<I", Path(path).read_bytes()[-4:])[0]


def read_csv_signal(path, units: Units | str = Units.VOLTS) -> MultiChannelSignal:
    """Import a CSV whose header names the channels and whose first column is time in seconds."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader if row])
    except (OSError, StopIteration, ValueError) as exc:
        raise DataError(f"cannot parse CSV {path}: {exc}") from exc
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] != len(header):
        raise DataError(f"{path}: expected a time column plus {len(header) - 1} channels")
    dt = np.diff(rows[:, 0])
    if np.any(dt <= 0):
        raise DataError(f"{path}: time column is not strictly increasing")
    rate = 1.0 / float(np.median(dt))
    return MultiChannelSignal(rows[:, 1:].T.copy(), rate, [h.strip() for h in header[1:]], units)
