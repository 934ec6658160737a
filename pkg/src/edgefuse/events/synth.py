"""Synthetic event scenes with a controllable fraction of active patches.

A bright object moves over a static textured background. Pixels entering
the object emit one ON event, pixels leaving it one OFF event; the first
frame is the object's onset against the empty scene. Object size (square) or
dot count (dot) is calibrated so the mean fraction of patches touched by
changed pixels matches ``activity_fraction``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core.rng import Rng
from .stream import EventStream, make_events
from .voxel import EventFrame, voxelize

OBJECTS = ("square", "dot", "flicker")
DOT_RADIUS = 2
TOLERANCE = 0.20


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSceneConfig:
    height: int = 224
    width: int = 224
    frames: int = 100
    activity_fraction: float = 0.15
    object: str = "square"
    speed: float = 6.0
    seed: int = 0
    patch_size: int = 16
    frame_us: int = 10_000

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.frames <= 0:
            raise SynthConfigError("height, width and frames must be positive")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise SynthConfigError(f"{self.height}x{self.width} not divisible by patch size {self.patch_size}")
        if not 0.0 <= self.activity_fraction <= 1.0:
            raise SynthConfigError(f"activity_fraction {self.activity_fraction} outside [0, 1]")
        if self.object not in OBJECTS:
            raise SynthConfigError(f"unknown object kind {self.object!r}; expected one of {OBJECTS}")
        if self.speed < 0:
            raise SynthConfigError("speed must be non-negative")
        if self.height > 0xFFFF or self.width > 0xFFFF:
            raise SynthConfigError("frame dims must fit in u16")

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.patch_size, self.width // self.patch_size

    @property
    def n_patches(self) -> int:
        gh, gw = self.grid
        return gh * gw


PRESETS = {
    "desk": SynthSceneConfig(),
    "dvs128": SynthSceneConfig(height=128, width=128, patch_size=16),
    "tiny": SynthSceneConfig(height=64, width=64, patch_size=8, frames=20, speed=3.0),
}


@dataclass
class SynthResult:
    config: SynthSceneConfig
    events: np.ndarray
    frames: list[EventFrame]
    rgb: list[np.ndarray]
    truth: list[np.ndarray]  # sorted active patch indices per frame
    object_param: int

    @property
    def mean_active(self) -> float:
        return float(np.mean([len(t) for t in self.truth]))

    @property
    def mean_active_fraction(self) -> float:
        return self.mean_active / self.config.n_patches

    def stream(self) -> EventStream:
        return EventStream(self.config.width, self.config.height, self.events)


def _trajectories(cfg: SynthSceneConfig, n: int, size: int) -> np.ndarray:
    """Top-left corners (n objects x frames x 2) of objects bouncing off the walls."""
    rng = Rng(cfg.seed)
    out = np.zeros((n, cfg.frames, 2), dtype=np.int64)
    for k in range(n):
        r = rng.spawn(k + 1)
        lim = np.array([cfg.height - size, cfg.width - size], dtype=np.float64)
        pos = r.uniform((2,)) * np.maximum(lim, 0)
        ang = r.uniform() * 2 * np.pi
        vel = cfg.speed * np.array([np.sin(ang), np.cos(ang)]).reshape(2)
        for t in range(cfg.frames):
            out[k, t] = np.rint(pos).astype(np.int64)
            pos = pos + vel
            for a in range(2):
                if pos[a] < 0:
                    pos[a], vel[a] = -pos[a], -vel[a]
                elif pos[a] > lim[a]:
                    pos[a], vel[a] = 2 * lim[a] - pos[a], -vel[a]
                pos[a] = min(max(pos[a], 0.0), lim[a])
    return out


def _dot_stamp() -> np.ndarray:
    d = 2 * DOT_RADIUS + 1
    yy, xx = np.mgrid[:d, :d] - DOT_RADIUS
    return (yy * yy + xx * xx) <= DOT_RADIUS * DOT_RADIUS


def _object_masks(cfg: SynthSceneConfig, param: int) -> list[np.ndarray]:
    h, w = cfg.height, cfg.width
    if cfg.object == "flicker":
        return [np.full((h, w), t % 2 == 0) for t in range(cfg.frames)]
    if param <= 0:
        return [np.zeros((h, w), dtype=bool) for _ in range(cfg.frames)]
    if cfg.object == "square":
        size, n, stamp = param, 1, None
    else:
        stamp = _dot_stamp()
        size, n = stamp.shape[0], param
    traj = _trajectories(cfg, n, size)
    masks = []
    for t in range(cfg.frames):
        m = np.zeros((h, w), dtype=bool)
        for k in range(n):
            y, x = traj[k, t]
            if stamp is None:
                m[y:y + size, x:x + size] = True
            else:
                m[y:y + size, x:x + size] |= stamp
        masks.append(m)
    return masks


def _changes(masks: list[np.ndarray]):
    prev = np.zeros_like(masks[0])
    for m in masks:
        yield m & ~prev, prev & ~m
        prev = m


def _patch_any(mask: np.ndarray, p: int) -> np.ndarray:
    h, w = mask.shape
    return mask.reshape(h // p, p, w // p, p).any(axis=(1, 3)).reshape(-1)


def _truth(cfg: SynthSceneConfig, masks: list[np.ndarray]) -> list[np.ndarray]:
    return [np.flatnonzero(_patch_any(on | off, cfg.patch_size)) for on, off in _changes(masks)]


def _fraction(cfg: SynthSceneConfig, param: int) -> float:
    masks = _object_masks(cfg, param)
    if cfg.speed == 0 and cfg.object != "flicker":
        # static object: only the onset frame changes, so match its footprint
        return _patch_any(masks[0], cfg.patch_size).mean()
    return float(np.mean([len(t) for t in _truth(cfg, masks)])) / cfg.n_patches


def calibrate(cfg: SynthSceneConfig) -> int:
    """Object side (square) or dot count (dot) whose activity best matches the target."""
    target = cfg.activity_fraction
    if cfg.object == "flicker" or target == 0.0:
        return 0
    if cfg.object == "square":
        hi = min(cfg.height, cfg.width)
        coarse = list(range(2, hi + 1, 8))
        best = min(coarse, key=lambda s: abs(_fraction(cfg, s) - target))
        fine = range(max(1, best - 8), min(hi, best + 8) + 1)
        return min(fine, key=lambda s: (abs(_fraction(cfg, s) - target), s))
    # dot count: union of independent dots grows monotonically with the count
    lo, hi = 1, 1
    while _fraction(cfg, hi) < target and hi < 4 * cfg.n_patches:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _fraction(cfg, mid) < target:
            lo = mid
        else:
            hi = mid
    return min((lo, hi), key=lambda n: abs(_fraction(cfg, n) - target))


def _background(cfg: SynthSceneConfig) -> np.ndarray:
    rng = Rng(cfg.seed ^ 0x5EED)
    gh, gw = cfg.grid
    coarse = rng.uniform((3, gh + 1, gw + 1)) * 0.4 + 0.1
    # bilinear upsampling of a coarse random lattice
    ys = np.linspace(0, gh, cfg.height)
    xs = np.linspace(0, gw, cfg.width)
    y0 = np.minimum(ys.astype(int), gh - 1)
    x0 = np.minimum(xs.astype(int), gw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c = coarse
    img = (c[:, y0][:, :, x0] * (1 - fy) * (1 - fx) + c[:, y0 + 1][:, :, x0] * fy * (1 - fx)
           + c[:, y0][:, :, x0 + 1] * (1 - fy) * fx + c[:, y0 + 1][:, :, x0 + 1] * fy * fx)
    return img.astype(np.float32)


OBJECT_COLOR = np.array([0.95, 0.85, 0.2], dtype=np.float32)


def synth_stream(cfg: SynthSceneConfig) -> SynthResult:
    param = calibrate(cfg)
    masks = _object_masks(cfg, param)
    truth = _truth(cfg, masks)
    result_frac = _fraction(cfg, param)
    target = cfg.activity_fraction
    if target > 0 and abs(result_frac - target) > TOLERANCE * target:
        raise SynthConfigError(
            f"activity_fraction {target} not achievable with object {cfg.object!r} "
            f"(best {result_frac:.3f} at parameter {param})"
        )

    rng = Rng(cfg.seed ^ 0xE7E7)
    ts, xs, ys, ps = [], [], [], []
    for t, (on, off) in enumerate(_changes(masks)):
        yy_on, xx_on = np.nonzero(on)
        yy_off, xx_off = np.nonzero(off)
        y = np.concatenate([yy_on, yy_off])
        x = np.concatenate([xx_on, xx_off])
        p = np.concatenate([np.ones(len(yy_on), np.uint8), np.zeros(len(yy_off), np.uint8)])
        stamp = t * cfg.frame_us + rng.integers(0, cfg.frame_us, (len(y),)).astype(np.uint64)
        order = np.argsort(stamp, kind="stable")
        ts.append(stamp[order])
        xs.append(x[order])
        ys.append(y[order])
        ps.append(p[order])
    events = make_events(np.concatenate(ts), np.concatenate(xs), np.concatenate(ys), np.concatenate(ps))

    bg = _background(cfg)
    frames, rgb = [], []
    bounds = np.searchsorted(events["t"], [k * cfg.frame_us for k in range(cfg.frames + 1)])
    for t in range(cfg.frames):
        window = (t * cfg.frame_us, (t + 1) * cfg.frame_us)
        frames.append(voxelize(events[bounds[t]:bounds[t + 1]], cfg.height, cfg.width, window))
        img = bg.copy()
        img[:, masks[t]] = OBJECT_COLOR[:, None]
        rgb.append(img)
    return SynthResult(cfg, events, frames, rgb, truth, param)


def with_overrides(cfg: SynthSceneConfig, **kw) -> SynthSceneConfig:
    return replace(cfg, **kw)
