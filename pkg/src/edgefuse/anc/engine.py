from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import flops
from ..core import tensor as T
from ..core.flops import FlopsLedger
from ..core.rng import Rng
from ..core.tensor import Tensor
from ..events.voxel import EventFrame
from .model import ACTIVE_CHANNEL, AncConfigError, AncModel
from .router import RoutingDecision, RoutingError, branch_forward, gumbel_route

LEVELS = ("tiny", "small", "medium")


def estimate_complexity(e: EventFrame | np.ndarray, model: AncModel) -> Tensor:
    counts = e.counts if isinstance(e, EventFrame) else np.asarray(e, dtype=np.float32)
    cfg = model.cfg
    if counts.shape != (2, cfg.height, cfg.width):
        raise AncConfigError(f"event frame {counts.shape} does not match model (2, {cfg.height}, {cfg.width})")
    with flops.stage("estimator"):
        return model.estimator(counts)


def decoder_depth(level: int, model: AncModel) -> int:
    if level not in (0, 1, 2):
        raise RoutingError(f"decode level must be 0, 1 or 2, got {level!r}")
    return model.cfg.dec_layers[level]


def conditional_decode(z: Tensor, y, level: int, model: AncModel, max_new_tokens: int | None = None,
                       dists_out: list | None = None) -> list[int]:
    """Greedy decoding with the shared decoder truncated to the level's depth.

    Cross-attention keys/values over ``z`` are projected once; ties go to
    the lowest token id.
    """
    layers = decoder_depth(level, model)
    n_new = model.cfg.max_new_tokens if max_new_tokens is None else max_new_tokens
    dec = model.decoder
    ids = [int(t) for t in dec.check_ids(y)]
    out = []
    with flops.stage("cross_attn"):
        k, v = model.xattn.project_kv(z)
    for _ in range(n_new):
        if len(ids) + 1 >= dec.max_len:
            break
        with flops.stage("decoder"):
            text = dec.embed(ids)
        with flops.stage("cross_attn"):
            h = model.xattn.attend(text, k, v, None)
        with flops.stage("decoder"):
            dist = T.softmax(dec.logits(h, layers)[-1:], axis=-1).data[0]
        if dists_out is not None:
            dists_out.append(dist)
        tok = int(np.argmax(dist))
        ids.append(tok)
        out.append(tok)
    return out


@dataclass
class AncMetrics:
    p: np.ndarray
    w: np.ndarray
    active: list[int]
    level: int
    budget: float
    active_channels: int
    total_channels: int
    executed: dict[str, int] = field(default_factory=dict)  # what actually ran
    cost: dict[str, int] = field(default_factory=dict)  # branch stages weighted by w_i

    @property
    def F(self) -> int:
        return sum(self.cost.values())

    def as_dict(self) -> dict:
        return {
            "p": [float(v) for v in self.p],
            "w": [float(v) for v in self.w],
            "active": [LEVELS[i] for i in self.active],
            "level": LEVELS[self.level],
            "budget": self.budget,
            "active_channels": self.active_channels,
            "total_channels": self.total_channels,
            "F": self.F,
            "executed": dict(sorted(self.executed.items())),
            "cost": dict(sorted(self.cost.items())),
        }


def fixed_route(weights) -> RoutingDecision:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or abs(w.sum() - 1.0) > 1e-6 or (w < 0).any():
        raise RoutingError(f"forced weights {w.tolist()} must be a K=3 distribution")
    return RoutingDecision(Tensor(w), temperature=float("nan"))


def anc_step(x: np.ndarray, e: EventFrame | np.ndarray, y, model: AncModel, budget: float = 1.0,
             mode: str = "infer", rng: Rng | None = None, force_weights=None,
             ledger: FlopsLedger | None = None, max_new_tokens: int | None = None):
    """One frame of adaptive branch routing; returns (y_hat, F, metrics).

    ``force_weights`` bypasses the estimator and router (the fixed-branch
    baselines); the decode level is then the argmax of the forced weights.
    F is the cost-ledger total: executed overhead stages plus
    round(w_i * FLOPs(E_i)) for each executed branch.
    """
    cfg = model.cfg
    b = min(max(float(budget), 0.0), 1.0)
    executed = FlopsLedger()
    with executed.recording(), T.no_grad():
        if force_weights is None:
            p = estimate_complexity(e, model)
            with flops.stage("router"):
                route = gumbel_route(p, cfg.temperature, rng, mode, cfg.straight_through)
            p_arr = p.data.astype(np.float64)
        else:
            route = fixed_route(force_weights)
            p_arr = route.w.copy()
        level = int(np.argmax(p_arr))
        out = branch_forward(model.branch_inputs(x, e), route, model, b)
        y_hat = conditional_decode(out.z, y, level, model, max_new_tokens)
    cost = {k: v for k, v in executed.as_dict().items() if not k.startswith("branch.")}
    for name, c in out.weighted_flops.items():
        cost[f"branch.{name}"] = c
    gates = [a.data for gs in out.gates.values() for a in gs]
    metrics = AncMetrics(
        p=p_arr, w=route.w, active=out.executed, level=level, budget=b,
        active_channels=int(sum((a > ACTIVE_CHANNEL).sum() for a in gates)),
        total_channels=int(sum(a.size for a in gates)),
        executed=executed.as_dict(), cost=cost,
    )
    if ledger is not None:
        ledger.merge(FlopsLedger(dict(cost)))
    return y_hat, metrics.F, metrics


def medium_only_step(x, e, y, model: AncModel, budget: float = 1.0, ledger: FlopsLedger | None = None,
                     max_new_tokens: int | None = None):
    """Always-Medium baseline: full-width branch, full-depth decoder, no estimator."""
    return anc_step(x, e, y, model, budget, force_weights=[0.0, 0.0, 1.0], ledger=ledger,
                    max_new_tokens=max_new_tokens)
