"""Toy datasets: motion direction from event frames, and token echo for the decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.rng import Rng

DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))  # (dy, dx): right, left, down, up


@dataclass(frozen=True)
class ToyTaskConfig:
    kind: str = "motion"  # "motion" | "echo"
    seed: int = 0
    n_train: int = 256
    n_val: int = 64
    size: int = 32
    side: int = 4
    speed: int = 2
    vocab: int = 16
    seq_len: int = 8

    def __post_init__(self):
        if self.kind not in ("motion", "echo"):
            raise ValueError(f"unknown toy task {self.kind!r}")
        if self.n_train <= 0 or self.n_val < 0:
            raise ValueError("split sizes must be positive")


@dataclass
class ToyTask:
    config: ToyTaskConfig
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    train_keys: np.ndarray  # sample identities, used to show the splits are disjoint
    val_keys: np.ndarray

    def batch(self, idx, split: str = "train"):
        x, y = (self.train_x, self.train_y) if split == "train" else (self.val_x, self.val_y)
        idx = np.asarray(idx)
        return x[idx], y[idx]


def motion_frame(y0: int, x0: int, direction: int, size: int, side: int, speed: int) -> np.ndarray:
    """Event counts (OFF, ON) for a square moving ``speed`` px in ``direction``."""
    dy, dx = DIRECTIONS[direction]
    before = np.zeros((size, size), dtype=bool)
    after = np.zeros((size, size), dtype=bool)
    before[y0:y0 + side, x0:x0 + side] = True
    y1, x1 = y0 + dy * speed, x0 + dx * speed
    after[y1:y1 + side, x1:x1 + side] = True
    return np.stack([before & ~after, after & ~before]).astype(np.float32)


def _split(keys: np.ndarray, cfg: ToyTaskConfig, rng: Rng):
    need = cfg.n_train + cfg.n_val
    if need > len(keys):
        raise ValueError(f"task has only {len(keys)} distinct samples, {need} requested")
    order = rng.permutation(len(keys))
    return keys[order[:cfg.n_train]], keys[order[cfg.n_train:need]]


def make_task(cfg: ToyTaskConfig = ToyTaskConfig()) -> ToyTask:
    rng = Rng(cfg.seed).spawn(0x7A5C)
    if cfg.kind == "motion":
        lo, hi = cfg.speed, cfg.size - cfg.side - cfg.speed
        grid = np.arange(lo, hi + 1)
        keys = np.array([(y, x, d) for y in grid for x in grid for d in range(4)], dtype=np.int64)
        tr, va = _split(keys, cfg, rng)

        def build(k):
            x = np.stack([motion_frame(y, xx, d, cfg.size, cfg.side, cfg.speed) for y, xx, d in k])
            return x, k[:, 2].copy()
    else:
        n = cfg.n_train + cfg.n_val
        # draw distinct sequences; keys are the sequences themselves
        seen, rows = set(), []
        while len(rows) < n:
            s = tuple(int(v) for v in rng.integers(0, cfg.vocab, (cfg.seq_len,)))
            if s not in seen:
                seen.add(s)
                rows.append(s)
        keys = np.array(rows, dtype=np.int64)
        tr, va = keys[:cfg.n_train], keys[cfg.n_train:]

        def build(k):
            return k.copy(), k.copy()
    trx, try_ = build(tr)
    vax, vay = build(va) if len(va) else (trx[:0], try_[:0])
    return ToyTask(cfg, trx, try_, vax, vay, tr, va)
