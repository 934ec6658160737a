"""Complexity-driven routing over the K=3 encoder branches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import flops
from ..core import tensor as T
from ..core.rng import Rng
from ..core.tensor import Tensor
from .model import AncModel, BranchEncoder, branch_flops

ROUTE_THRESHOLD = 0.1
LOG_FLOOR = 1e-12


class RoutingError(ValueError):
    pass


@dataclass
class RoutingDecision:
    weights: Tensor  # differentiable when p was
    temperature: float
    noise_seed: int | None = None
    threshold: float = ROUTE_THRESHOLD

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights.data, dtype=np.float64)

    @property
    def active(self) -> list[int]:
        return [i for i, wi in enumerate(self.w) if wi > self.threshold]


def check_scores(p) -> None:
    arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    if arr.shape != (3,):
        raise RoutingError(f"complexity scores must have K=3 entries, got shape {arr.shape}")
    if (arr < 0).any() or (arr > 1).any() or abs(arr.sum() - 1.0) > 1e-5:
        raise RoutingError(f"complexity scores {arr.tolist()} are not a distribution")


def gumbel_route(p, temperature: float = 0.5, rng: Rng | None = None, mode: str = "infer",
                 straight_through: bool = False, noise: np.ndarray | None = None,
                 validate: bool = True) -> RoutingDecision:
    """w = softmax((log p + g) / temperature); g is Gumbel noise in train mode and zero in infer mode.

    With ``straight_through`` the forward weights are the hard one-hot argmax
    while gradients follow the soft weights. ``validate=False`` skips the
    distribution check on ``p`` (finite-difference probes step off the simplex).
    """
    if temperature <= 0:
        raise RoutingError(f"temperature must be positive, got {temperature}")
    if mode not in ("train", "infer"):
        raise RoutingError(f"unknown routing mode {mode!r}")
    if validate:
        check_scores(p)
    p = p if isinstance(p, Tensor) else Tensor(np.asarray(p))
    logits = T.log(T.clamp(p, LOG_FLOOR, 1.0))
    seed = None
    if mode == "train":
        if noise is None:
            if rng is None:
                raise RoutingError("train-mode routing needs an rng or explicit noise")
            seed = rng.state
            noise = rng.gumbel((3,))
        logits = logits + Tensor(np.asarray(noise))
    w = T.softmax(logits * (1.0 / temperature), axis=-1)
    if straight_through:
        hard = np.zeros_like(w.data)
        hard[int(np.argmax(w.data))] = 1.0
        w = w + Tensor(hard - w.data)
    return RoutingDecision(w, temperature, seed)


@dataclass
class BranchOutput:
    z: Tensor
    executed: list[int]
    weighted_flops: dict[str, int]  # round(w_i * FLOPs(E_i)) per executed branch
    gates: dict[int, list[Tensor]]


def branch_forward(inputs: Tensor, route: RoutingDecision, model: AncModel, b=1.0) -> BranchOutput:
    """Run every branch whose weight clears the threshold; z = sum_i w_i z_i over those branches.

    Surviving weights are not renormalised. Each executed branch is charged
    to its own ledger stage ("branch.<name>").
    """
    w = route.w
    active = route.active
    # max w_i >= 1/K > threshold for K=3, so this cannot be empty
    assert active, f"no branch clears threshold {route.threshold}: w={w.tolist()}"
    z = None
    costs, gates = {}, {}
    for i in active:
        enc: BranchEncoder = model.branches[i]
        with flops.stage(f"branch.{enc.spec.name}"):
            zi, gates[i] = enc(inputs, b)
        with flops.stage("fuse"):
            term = zi * route.weights[i]
            z = term if z is None else z + term
        costs[enc.spec.name] = int(round(w[i] * branch_flops(enc.spec, model.cfg)))
    return BranchOutput(z, active, costs, gates)
