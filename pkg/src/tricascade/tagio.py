"""Time-tag streams and their on-disk formats.

Binary ``TTG1``: a 16-byte little-endian header (magic, u16 version,
u16 channel count, u32 resolution in ps, u32 reserved) followed by packed
9-byte records ``(u8 channel, u64 time_ps)`` sorted by time.  The CSV
alternative has the header ``channel,time_ps``.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import TagDataError, TagFormatError

MAGIC = b"TTG1"
VERSION = 1
HEADER = struct.Struct("<4sHHII")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("time_ps", "<u8")])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 9
CSV_HEADER = "channel,time_ps"


@dataclass
class TagStream:
    """Globally time-sorted detections.

    ``duration_ps`` is the observation time used to turn counts into
    singles rates; when unknown it defaults to the span of the tags.
    """

    times: np.ndarray
    channels: np.ndarray
    n_channels: int
    resolution_ps: int = 1
    duration_ps: int | None = None

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.int64)
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if self.times.shape != self.channels.shape:
            raise TagDataError("times and channels differ in length")

    def __len__(self):
        return self.times.size

    def channel(self, ch):
        return self.times[self.channels == ch]

    @property
    def observation_ps(self):
        if self.duration_ps is not None:
            return int(self.duration_ps)
        if self.times.size == 0:
            return 0
        return int(self.times[-1] - self.times[0]) + 1

    def counts(self):
        return np.bincount(self.channels, minlength=self.n_channels)

    @classmethod
    def from_channels(cls, per_channel, duration_ps=None):
        """Merge a list of per-channel time arrays into one sorted stream."""
        times = np.concatenate([np.asarray(t, dtype=np.int64) for t in per_channel]) if per_channel else np.empty(0, np.int64)
        chans = np.concatenate([np.full(len(t), i, dtype=np.uint8) for i, t in enumerate(per_channel)]) if per_channel else np.empty(0, np.uint8)
        order = np.argsort(times, kind="stable")
        return cls(times[order], chans[order], len(per_channel), duration_ps=duration_ps)


def write_tags(target, stream, fmt="bin"):
    """Write ``stream`` to a path or binary file object."""
    if len(stream) and stream.times.min() < 0:
        raise TagDataError("negative timestamps cannot be written")
    if fmt == "bin":
        header = HEADER.pack(MAGIC, VERSION, stream.n_channels, stream.resolution_ps, 0)
        rec = np.empty(len(stream), dtype=RECORD_DTYPE)
        rec["channel"] = stream.channels
        rec["time_ps"] = stream.times
        payload = header + rec.tobytes()
    elif fmt == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        if len(stream):
            np.savetxt(buf, np.column_stack([stream.channels, stream.times]), fmt="%d", delimiter=",")
        payload = buf.getvalue().encode()
    else:
        raise ValueError(f"unknown tag format {fmt!r}")
    if hasattr(target, "write"):
        target.write(payload)
    else:
        with open(target, "wb") as fh:
            fh.write(payload)


def _check_channels(channels, times, n_channels, record_offset):
    bad = np.flatnonzero(channels >= n_channels)
    if bad.size:
        i = int(bad[0])
        raise TagDataError(
            f"record {i} has channel {int(channels[i])} but only {n_channels} channels are declared",
            record_offset(i),
        )
    for ch in range(n_channels):
        idx = np.flatnonzero(channels == ch)
        if idx.size > 1:
            back = np.flatnonzero(np.diff(times[idx]) < 0)
            if back.size:
                i = int(idx[back[0] + 1])
                raise TagDataError(f"time regression on channel {ch} at record {i}", record_offset(i))


def _parse_binary(data):
    if len(data) < HEADER.size:
        raise TagFormatError("file shorter than the 16-byte header", 0)
    magic, version, n_channels, resolution, _ = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise TagFormatError(f"unsupported version {version}", 4)
    body = len(data) - HEADER.size
    if body % RECORD_DTYPE.itemsize:
        n_full = body // RECORD_DTYPE.itemsize
        raise TagFormatError("truncated record", HEADER.size + n_full * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size)
    if rec.size and rec["time_ps"].max() > np.iinfo(np.int64).max:
        i = int(np.argmax(rec["time_ps"] > np.iinfo(np.int64).max))
        raise TagDataError("timestamp exceeds the int64 range", HEADER.size + i * RECORD_DTYPE.itemsize)
    channels = rec["channel"].copy()
    times = rec["time_ps"].astype(np.int64)
    _check_channels(channels, times, n_channels, lambda i: HEADER.size + i * RECORD_DTYPE.itemsize)
    return channels, times, n_channels, resolution


def _parse_csv(data, n_channels=None):
    text = data.decode("ascii", errors="replace")
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].strip().replace(" ", "") != CSV_HEADER:
        raise TagFormatError(f"CSV header must be {CSV_HEADER!r}", 0)
    offsets = np.cumsum([0] + [len(ln.encode()) for ln in lines])
    body = "".join(lines[1:])
    if not body.strip():
        body = ""
    try:
        arr = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2) if body else np.empty((0, 2), np.int64)
    except ValueError:
        for k, ln in enumerate(lines[1:], start=1):
            parts = ln.strip().split(",")
            if ln.strip() and (len(parts) != 2 or not all(p.strip().lstrip("-").isdigit() for p in parts)):
                raise TagFormatError(f"bad CSV row {k + 1}: {ln.strip()!r}", int(offsets[k])) from None
        raise TagFormatError("unparseable CSV body", int(offsets[1])) from None
    if arr.size == 0:
        arr = np.empty((0, 2), dtype=np.int64)
    if arr.shape[1] != 2:
        raise TagFormatError("CSV rows must have two fields", int(offsets[1]))
    row_offsets = [int(offsets[k]) for k, ln in enumerate(lines) if k and ln.strip()]
    neg = np.flatnonzero((arr[:, 0] < 0) | (arr[:, 0] > 255) | (arr[:, 1] < 0))
    if neg.size:
        raise TagDataError("channel or time out of range", row_offsets[int(neg[0])])
    channels = arr[:, 0].astype(np.uint8)
    times = arr[:, 1]
    if n_channels is None:
        n_channels = int(channels.max()) + 1 if channels.size else 0
    _check_channels(channels, times, n_channels, lambda i: row_offsets[i])
    return channels, times, n_channels, 1


def read_tags(source, fmt="auto", n_channels=None, duration_ps=None):
    """Read a TTG1 or CSV tag file (path, bytes, or binary file object).

    Per-channel time regressions and out-of-range channels raise
    :class:`TagDataError` carrying the byte offset of the offending record.
    Records that are only globally out of order are merged stably.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(os.fspath(source), "rb") as fh:
            data = fh.read()
    if fmt == "auto":
        fmt = "bin" if data[:4] == MAGIC else "csv"
    if fmt == "bin":
        channels, times, nch, res = _parse_binary(data)
    elif fmt == "csv":
        channels, times, nch, res = _parse_csv(data, n_channels)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")
    if times.size > 1 and np.any(np.diff(times) < 0):
        order = np.argsort(times, kind="stable")
        times, channels = times[order], channels[order]
    return TagStream(times, channels, nch, res, duration_ps)
