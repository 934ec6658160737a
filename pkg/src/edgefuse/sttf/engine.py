from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import flops
from ..core import tensor as T
from ..core.flops import FlopsLedger
from ..core.tensor import Tensor
from ..events.voxel import EventFrame
from .fusion import adapt_tau, similarity_stats
from .mask import ChangeMask, detect_change_mask, extract_active_patches
from .memory import SessionError, TokenBank, bank_from_state, bank_state, full_encode, fuse_tokens, selective_update
from .model import SttfModel

STAGES = ("event_gate", "sparse_encoder", "fusion", "cross_attn", "decoder")


@dataclass(frozen=True)
class FusionConfig:
    """Fusion threshold settings.

    ``tau`` fuses final-layer tokens. ``per_layer`` (one threshold per
    encoder layer) or ``use_policy`` switch to fusion after every encoder
    layer instead; the policy reads each layer's similarity stats and
    ``budget``.
    """

    tau: float = 0.9
    per_layer: tuple[float, ...] | None = None
    use_policy: bool = False
    budget: float = 0.5

    def validate(self, depth: int) -> None:
        if self.per_layer is not None and len(self.per_layer) != depth:
            raise ValueError(f"per_layer has {len(self.per_layer)} thresholds, encoder depth is {depth}")
        if not 0.0 <= self.budget <= 1.0:
            raise ValueError(f"budget {self.budget} outside [0, 1]")


NO_FUSION = FusionConfig(tau=1.01)


@dataclass
class SttfState:
    bank: TokenBank
    mask: ChangeMask
    signature: tuple

    def to_tensors(self) -> dict[str, np.ndarray]:
        out = bank_state(self.bank, self.mask)
        out["signature"] = np.asarray(self.signature, dtype=np.float32)
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "SttfState":
        bank, mask = bank_from_state(tensors)
        sig = tuple(int(v) for v in tensors["signature"])
        return cls(bank, mask, sig)


@dataclass
class StepMetrics:
    frame_index: int
    active_tokens: int
    mask_active: int
    fused_count: int
    flops: dict[str, int] = field(default_factory=dict)

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())


def stale_bias(bank: TokenBank, n_queries: int, gamma: float) -> np.ndarray:
    """Additive logit bias: -gamma on every slot not re-encoded this frame."""
    row = np.where(bank.stale_age > 0, -gamma, 0.0)
    return np.broadcast_to(row, (n_queries, bank.n)).astype(np.float32)


def temporal_cross_attention(bank: TokenBank, text: Tensor, model: SttfModel, gamma: float | None = None,
                             probs_out: list | None = None) -> Tensor:
    gamma = model.cfg.gamma if gamma is None else gamma
    if text.shape[1] != bank.tokens.shape[1]:
        raise ValueError(f"text width {text.shape[1]} != token width {bank.tokens.shape[1]}")
    with flops.stage("cross_attn"):
        return model.xattn(text, Tensor(bank.tokens), stale_bias(bank, text.shape[0], gamma), probs_out)


def decode(h: Tensor, model: SttfModel, layers: int | None = None) -> tuple[np.ndarray, int]:
    """Next-token distribution after the last position and its greedy choice (lowest index on ties)."""
    with flops.stage("decoder"):
        logits = model.decoder.logits(h, layers)
        dist = T.softmax(logits[-1:], axis=-1).data[0]
    return dist, int(np.argmax(dist))


def generate(bank: TokenBank, y, model: SttfModel, max_new_tokens: int | None = None,
             gamma: float | None = None) -> list[int]:
    n_new = model.cfg.max_new_tokens if max_new_tokens is None else max_new_tokens
    gamma = model.cfg.gamma if gamma is None else gamma
    ids = [int(t) for t in model.decoder.check_ids(y)]
    out = []
    with flops.stage("cross_attn"):
        # vision keys/values are fixed for the frame, so project them once
        k, v = model.xattn.project_kv(Tensor(bank.tokens))
    for _ in range(n_new):
        if len(ids) + 1 >= model.decoder.max_len:
            break
        with flops.stage("decoder"):
            text = model.decoder.embed(ids)
        with flops.stage("cross_attn"):
            h = model.xattn.attend(text, k, v, stale_bias(bank, len(ids), gamma))
        _, tok = decode(h, model)
        ids.append(tok)
        out.append(tok)
    return out


def _layer_tau(fusion: FusionConfig, model: SttfModel):
    if fusion.per_layer is not None:
        taus = fusion.per_layer
        return lambda l, sims: float(taus[l])
    if fusion.use_policy:
        return lambda l, sims: float(adapt_tau(similarity_stats(sims), fusion.budget, model.policy)[0])
    return None


def sttf_step(x: np.ndarray, e: EventFrame | np.ndarray, y, state: SttfState | None, model: SttfModel,
              fusion: FusionConfig = FusionConfig(), ledger: FlopsLedger | None = None,
              max_new_tokens: int | None = None) -> tuple[list[int], SttfState, StepMetrics]:
    """One frame of sparse temporal token fusion.

    mask -> active patches -> selective update (or full encode on the first
    frame) -> fusion -> temporally masked cross-attention -> greedy decode.
    """
    cfg = model.cfg
    fusion.validate(cfg.depth)
    if state is not None and state.signature != cfg.signature():
        raise SessionError(f"state from session {state.signature} does not match model {cfg.signature()}")
    step = FlopsLedger()
    with step.recording(), T.no_grad():
        mask = detect_change_mask(e, model)
        active = extract_active_patches(np.asarray(x, dtype=np.float32), mask, cfg.patch_size)
        layer_tau = _layer_tau(fusion, model)
        if state is None:
            bank = full_encode(x, model)
            active_tokens = cfg.n_patches
        else:
            bank = selective_update(active, mask, state.bank, model, layer_tau=layer_tau)
            active_tokens = len(active)
            if layer_tau is None:
                bank, _ = fuse_tokens(state.bank, bank, fusion.tau, model.fusion_gate)
        y_hat = generate(bank, y, model, max_new_tokens)
    for s in STAGES:
        step.entries.setdefault(s, 0)
    if ledger is not None:
        ledger.merge(step)
    metrics = StepMetrics(bank.frame_index, active_tokens, mask.active_count, bank.fused_count, step.as_dict())
    return y_hat, SttfState(bank, mask, cfg.signature()), metrics


def dense_step(x: np.ndarray, y, model: SttfModel, frame_index: int = 0, ledger: FlopsLedger | None = None,
               max_new_tokens: int | None = None) -> tuple[list[int], StepMetrics]:
    """Dense baseline: full encoding every frame, no gate, no reuse."""
    step = FlopsLedger()
    with step.recording(), T.no_grad():
        bank = full_encode(x, model, frame_index)
        y_hat = generate(bank, y, model, max_new_tokens)
    for s in STAGES:
        step.entries.setdefault(s, 0)
    if ledger is not None:
        ledger.merge(step)
    n = model.cfg.n_patches
    return y_hat, StepMetrics(frame_index, n, n, 0, step.as_dict())
