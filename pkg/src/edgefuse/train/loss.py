"""Composite training objective with relaxed L0 sparsity terms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core.tensor import Tensor


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossConfig:
    # no published values exist for these; 0.01 each is our default
    lambda1: float = 0.01  # token sparsity
    lambda2: float = 0.01  # gate sparsity
    latency_weight: float = 0.0  # threshold-policy regulariser

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "latency_weight"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class SurrogateReport:
    task_loss: float
    token_l0_relaxed: float  # expected active tokens per frame
    gate_l0_relaxed: float  # summed gate activations per frame
    total: float
    step: int = -1
    accuracy: float | None = None

    def as_dict(self) -> dict:
        out = {"step": self.step, "task_loss": self.task_loss, "token_l0_relaxed": self.token_l0_relaxed,
               "gate_l0_relaxed": self.gate_l0_relaxed, "total": self.total}
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out


def _value(name: str, t) -> float:
    v = float(np.asarray(t.data if isinstance(t, Tensor) else t).sum())
    if not math.isfinite(v):
        raise NumericError(f"{name} is not finite ({v})")
    return v


def composite_loss(task_loss, token_surrogate, gate_surrogate, cfg: LossConfig = LossConfig()):
    """L = task + lambda1 * tokens + lambda2 * gates.

    Returns (loss, report). ``loss`` is a Tensor when any term is one, so it
    can be backpropagated; the report's ``total`` is the same sum in float64.
    """
    task = _value("task loss", task_loss)
    tok = _value("token surrogate", token_surrogate)
    gate = _value("gate surrogate", gate_surrogate)
    loss = task_loss
    if cfg.lambda1:
        loss = loss + token_surrogate * cfg.lambda1
    if cfg.lambda2:
        loss = loss + gate_surrogate * cfg.lambda2
    report = SurrogateReport(task, tok, gate, task + cfg.lambda1 * tok + cfg.lambda2 * gate)
    return loss, report
