"""EVS1 binary event-stream format.

Header (16 bytes, little-endian): b"EVS1", width u16, height u16, count u64.
Records (13 bytes each, packed): t u64 (microseconds), x u16, y u16, polarity u8.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"EVS1"
HEADER = struct.Struct("<4sHHQ")
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
assert HEADER.size == 16 and EVENT_DTYPE.itemsize == 13


class StreamFormatError(ValueError):
    pass


@dataclass
class EventStream:
    width: int
    height: int
    events: np.ndarray  # structured array of EVENT_DTYPE

    def __len__(self) -> int:
        return len(self.events)


def make_events(t, x, y, p) -> np.ndarray:
    ev = np.empty(len(t), dtype=EVENT_DTYPE)
    ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
    return ev


def write_stream(stream: EventStream) -> bytes:
    ev = np.ascontiguousarray(stream.events, dtype=EVENT_DTYPE)
    if len(ev) > 1 and np.any(np.diff(ev["t"].astype(np.int64)) < 0):
        raise StreamFormatError("event timestamps must be non-decreasing")
    return HEADER.pack(MAGIC, stream.width, stream.height, len(ev)) + ev.tobytes()


def read_stream(buf: bytes) -> EventStream:
    if len(buf) < HEADER.size:
        raise StreamFormatError("truncated EVS1 header")
    magic, width, height, count = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = HEADER.size + count * EVENT_DTYPE.itemsize
    if len(buf) != expected:
        raise StreamFormatError(f"header declares {count} events ({expected} bytes), file has {len(buf)} bytes")
    ev = np.frombuffer(buf, dtype=EVENT_DTYPE, count=count, offset=HEADER.size).copy()
    return EventStream(width, height, ev)


def save_stream(path: str | Path, stream: EventStream) -> None:
    Path(path).write_bytes(write_stream(stream))


def load_stream(path: str | Path) -> EventStream:
    return read_stream(Path(path).read_bytes())
