from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import flops
from ..core import tensor as T
from ..events.voxel import EventFrame
from .model import SttfConfigError, SttfModel, patchify


@dataclass
class ChangeMask:
    pixel: np.ndarray  # bool, 1 x H x W
    per_patch: np.ndarray  # bool, N

    @property
    def active_count(self) -> int:
        return int(self.per_patch.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.per_patch)


@dataclass
class ActivePatchSet:
    indices: np.ndarray  # ascending patch indices
    pixels: np.ndarray  # len(indices) x (3*p*p)

    def __len__(self) -> int:
        return len(self.indices)


def reduce_to_patches(pixel: np.ndarray, patch_size: int, theta: float) -> np.ndarray:
    _, h, w = pixel.shape
    p = patch_size
    means = pixel.reshape(h // p, p, w // p, p).mean(axis=(1, 3), dtype=np.float64)
    return (means > theta).reshape(-1)


def gate_probabilities(e: EventFrame | np.ndarray, model: SttfModel) -> T.Tensor:
    counts = e.counts if isinstance(e, EventFrame) else np.asarray(e, dtype=np.float32)
    cfg = model.cfg
    if counts.shape != (2, cfg.height, cfg.width):
        raise SttfConfigError(f"event frame {counts.shape} does not match model (2, {cfg.height}, {cfg.width})")
    return T.sigmoid(model.gate(counts))


def detect_change_mask(e: EventFrame | np.ndarray, model: SttfModel) -> ChangeMask:
    with flops.stage("event_gate"), T.no_grad():
        probs = gate_probabilities(e, model)
    pixel = probs.data > 0.5
    return ChangeMask(pixel, reduce_to_patches(pixel, model.cfg.patch_size, model.cfg.theta_patch))


def extract_active_patches(x: np.ndarray, mask: ChangeMask, patch_size: int) -> ActivePatchSet:
    c, h, w = x.shape
    if h % patch_size or w % patch_size:
        raise SttfConfigError(f"{h}x{w} not divisible by patch size {patch_size}")
    if mask.per_patch.size != (h // patch_size) * (w // patch_size):
        raise SttfConfigError("mask patch grid does not match frame")
    idx = mask.indices
    return ActivePatchSet(idx, patchify(np.asarray(x, dtype=np.float32), patch_size)[idx])
