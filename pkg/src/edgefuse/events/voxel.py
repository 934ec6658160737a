from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.tensor import Tensor


class EventDataError(ValueError):
    pass


@dataclass
class EventFrame:
    """Polarity counts over the half-open window [t_start, t_end).

    Channel 0 holds OFF events, channel 1 ON events.
    """

    counts: np.ndarray  # float32, 2 x H x W
    window: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape[1], self.counts.shape[2]

    def tensor(self) -> Tensor:
        return Tensor(self.counts)

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())


def voxelize(events: np.ndarray, height: int, width: int, window: tuple[int, int]) -> EventFrame:
    t0, t1 = window
    if t1 <= t0:
        raise ValueError(f"empty window {window}")
    x = events["x"].astype(np.int64)
    y = events["y"].astype(np.int64)
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        i = int(bad[0])
        raise EventDataError(f"event {i} at (x={x[i]}, y={y[i]}) outside {width}x{height} frame")
    t = events["t"]
    sel = (t >= t0) & (t < t1)
    p = events["p"][sel].astype(np.int64)
    if p.size and p.max() > 1:
        raise EventDataError(f"polarity must be 0 or 1, got {p.max()}")
    flat = (p * height + y[sel]) * width + x[sel]
    counts = np.bincount(flat, minlength=2 * height * width).astype(np.float32)
    return EventFrame(counts.reshape(2, height, width), (int(t0), int(t1)))


def frames_from_stream(events: np.ndarray, height: int, width: int, frame_us: int, n_frames: int | None = None,
                       t_origin: int = 0) -> list[EventFrame]:
    """Slice a stream into consecutive fixed-length windows starting at ``t_origin``."""
    if n_frames is None:
        last = int(events["t"].max()) if len(events) else t_origin
        n_frames = max(1, (last - t_origin) // frame_us + 1)
    out = []
    # records are time-sorted, so each window is a contiguous slice
    bounds = np.searchsorted(events["t"], [t_origin + k * frame_us for k in range(n_frames + 1)])
    for k in range(n_frames):
        chunk = events[bounds[k]:bounds[k + 1]]
        out.append(voxelize(chunk, height, width, (t_origin + k * frame_us, t_origin + (k + 1) * frame_us)))
    return out
