"""Token memory: per-slot tokens plus per-layer key/value caches.

Re-encoding a subset of slots runs the encoder only on those rows. At every
layer their queries attend over all N keys: fresh keys for the re-encoded
rows, cached (detached) keys for the rest. With every slot active this is
the dense forward pass, computed by the same code path.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..core import flops
from ..core import tensor as T
from ..core.checkpoint import pack_u32, unpack_u32
from ..core.tensor import Tensor
from .fusion import cosine_rows, fuse_rows
from .mask import ActivePatchSet, ChangeMask
from .model import SttfConfigError, SttfModel


class SessionError(RuntimeError):
    pass


@dataclass
class TokenBank:
    hidden: list[np.ndarray]  # per encoder layer output, N x d; the last one is the token bank
    keys: list[np.ndarray]
    values: list[np.ndarray]
    stale_age: np.ndarray  # frames since each slot was last re-encoded
    frame_index: int
    fused: np.ndarray = field(default=None)  # slots merged with their predecessor this frame

    def __post_init__(self):
        if self.fused is None:
            self.fused = np.zeros(len(self.stale_age), dtype=bool)

    @property
    def tokens(self) -> np.ndarray:
        return self.hidden[-1]

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def fused_count(self) -> int:
        return int(self.fused.sum())

    @property
    def refreshed(self) -> np.ndarray:
        return self.stale_age == 0

    def copy(self) -> "TokenBank":
        return TokenBank([h.copy() for h in self.hidden], [k.copy() for k in self.keys],
                         [v.copy() for v in self.values], self.stale_age.copy(), self.frame_index,
                         self.fused.copy())


# (layer index, cosine of refreshed rows vs their cached predecessors) -> threshold
LayerTau = Callable[[int, np.ndarray], float]


def _encode(model: SttfModel, patches: np.ndarray, idx: np.ndarray, cache: TokenBank | None,
            layer_tau: LayerTau | None = None):
    """Run the encoder on rows ``idx``; returns per-layer row outputs, full K/V, final merged mask."""
    h = model.embed(Tensor(patches), idx)
    rows, keys, values = [], [], []
    merged = np.zeros(len(idx), dtype=bool)
    for l, blk in enumerate(model.blocks):
        a = blk.attn
        hq = blk.ln1(h)
        q, k, v = a.wq(hq), a.wk(hq), a.wv(hq)
        if cache is None:
            K, V = k, v
        else:
            K = T.put_rows(Tensor(cache.keys[l]), idx, k)
            V = T.put_rows(Tensor(cache.values[l]), idx, v)
        h = h + a.attend(q, K, V)
        h = h + blk.mlp(blk.ln2(h))
        if layer_tau is not None and cache is not None:
            prev_rows = cache.hidden[l][idx]
            tau = layer_tau(l, cosine_rows(prev_rows, h.data))
            with flops.stage("fusion"):
                h, merged = fuse_rows(prev_rows, h, model.fusion_gate, tau)
        rows.append(h)
        keys.append(K.data)
        values.append(V.data)
    return rows, keys, values, merged


def full_encode(x: np.ndarray, model: SttfModel, frame_index: int = 0) -> TokenBank:
    patches = model.patchify(x)
    n = model.cfg.n_patches
    idx = np.arange(n)
    with flops.stage("sparse_encoder"), T.no_grad():
        rows, keys, values, _ = _encode(model, patches, idx, None)
    return TokenBank([r.data for r in rows], keys, values, np.zeros(n, dtype=np.int64), frame_index)


def check_bank(bank: TokenBank, model: SttfModel) -> None:
    cfg = model.cfg
    if len(bank.hidden) != cfg.depth or bank.tokens.shape != (cfg.n_patches, cfg.d):
        raise SttfConfigError(
            f"token bank {bank.tokens.shape} x {len(bank.hidden)} layers does not match model "
            f"({cfg.n_patches}, {cfg.d}) x {cfg.depth}"
        )


def selective_update(active: ActivePatchSet, mask: ChangeMask, prev: TokenBank, model: SttfModel,
                     frame_index: int | None = None, layer_tau: LayerTau | None = None) -> TokenBank:
    check_bank(prev, model)
    if frame_index is not None and prev.frame_index != frame_index - 1:
        raise SessionError(f"bank holds frame {prev.frame_index}, cannot update to frame {frame_index}")
    if not np.array_equal(active.indices, mask.indices):
        raise SttfConfigError("active patch set does not match the change mask")
    idx = active.indices
    stale = prev.stale_age + 1
    stale[idx] = 0
    if len(idx) == 0:
        out = prev.copy()
        out.stale_age = stale
        out.frame_index = prev.frame_index + 1
        out.fused = np.zeros(prev.n, dtype=bool)
        return out
    with flops.stage("sparse_encoder"), T.no_grad():
        rows, keys, values, merged = _encode(model, active.pixels, idx, prev, layer_tau)
    hidden = []
    for l, r in enumerate(rows):
        full = prev.hidden[l].copy()
        full[idx] = r.data
        hidden.append(full)
    fused = np.zeros(prev.n, dtype=bool)
    fused[idx] = merged
    return TokenBank(hidden, keys, values, stale, prev.frame_index + 1, fused)


def fuse_tokens(prev: TokenBank, curr: TokenBank, tau: float, gate_w: Tensor) -> tuple[TokenBank, int]:
    """Blend each slot refreshed this frame with its predecessor when cos > tau."""
    if prev.tokens.shape != curr.tokens.shape:
        raise SttfConfigError(f"banks not aligned: {prev.tokens.shape} vs {curr.tokens.shape}")
    idx = np.flatnonzero(curr.refreshed)
    out = replace(curr, hidden=list(curr.hidden), fused=np.zeros(curr.n, dtype=bool))
    if len(idx) == 0:
        return out, 0
    with flops.stage("fusion"), T.no_grad():
        rows, merged = fuse_rows(prev.tokens[idx], Tensor(curr.tokens[idx]), gate_w, tau)
    tokens = curr.tokens.copy()
    tokens[idx] = rows.data
    out.hidden[-1] = tokens
    out.fused[idx] = merged
    return out, int(merged.sum())


def bank_state(bank: TokenBank, mask: ChangeMask | None) -> dict[str, np.ndarray]:
    """Flatten a bank (and the last change mask) into checkpoint tensors."""
    out: dict[str, np.ndarray] = {}
    for l in range(len(bank.hidden)):
        out[f"hidden.{l}"] = bank.hidden[l]
        out[f"keys.{l}"] = bank.keys[l]
        out[f"values.{l}"] = bank.values[l]
    out["stale_age"] = pack_u32(bank.stale_age)
    out["frame_index"] = pack_u32([bank.frame_index & 0xFFFFFFFF, bank.frame_index >> 32])
    out["fused"] = pack_u32(bank.fused.astype(np.uint32))
    if mask is not None:
        out["mask.pixel"] = mask.pixel.astype(np.float32)
        out["mask.per_patch"] = pack_u32(mask.per_patch.astype(np.uint32))
    return out


def bank_from_state(state: dict[str, np.ndarray]) -> tuple[TokenBank, ChangeMask | None]:
    depth = sum(1 for k in state if k.startswith("hidden."))
    if depth == 0:
        raise SessionError("state holds no token bank")
    lo, hi = unpack_u32(state["frame_index"])
    bank = TokenBank(
        [np.array(state[f"hidden.{l}"]) for l in range(depth)],
        [np.array(state[f"keys.{l}"]) for l in range(depth)],
        [np.array(state[f"values.{l}"]) for l in range(depth)],
        unpack_u32(state["stale_age"]),
        int(lo) | (int(hi) << 32),
        unpack_u32(state["fused"]).astype(bool),
    )
    mask = None
    if "mask.pixel" in state:
        mask = ChangeMask(state["mask.pixel"] > 0.5, unpack_u32(state["mask.per_patch"]).astype(bool))
    return bank, mask
