from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, TextIO

import numpy as np

from ..core.rng import Rng
from .loss import LossConfig, NumericError, SurrogateReport, composite_loss
from .tasks import ToyTask, ToyTaskConfig, make_task
from .toy import ToyEchoModel, ToyMotionModel


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = "motion"
    steps: int = 200
    lr: float = 0.05
    batch: int = 8
    seed: int = 0
    lambda1: float = 0.01
    lambda2: float = 0.01
    latency_weight: float = 0.0
    budget: float = 1.0
    n_train: int = 256
    n_val: int = 64
    hidden: int = 32

    def __post_init__(self):
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ValueError(f"learning rate must be finite and >= 0, got {self.lr}")
        if self.batch <= 0 or self.steps < 0:
            raise ValueError("batch must be positive and steps non-negative")
        self.loss  # validates the weights

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.lambda1, self.lambda2, self.latency_weight)

    @property
    def task_config(self) -> ToyTaskConfig:
        return ToyTaskConfig(kind=self.task, seed=self.seed, n_train=self.n_train, n_val=self.n_val)


def build_model(cfg: TrainConfig):
    rng = Rng(cfg.seed).spawn(0xA11CE)
    if cfg.task == "motion":
        return ToyMotionModel(hidden=cfg.hidden, rng=rng)
    if cfg.task == "echo":
        return ToyEchoModel(rng=rng)
    raise ValueError(f"unknown task {cfg.task!r}")


def sgd(params, lr: float) -> None:
    for p in params:
        if p.grad is not None:
            p.data = (p.data - lr * p.grad).astype(p.data.dtype)


def train_step(model, batch, cfg: TrainConfig, step: int = 0) -> SurrogateReport:
    """Forward, composite loss, backward, one plain SGD update."""
    if cfg.lr < 0:
        raise ValueError("learning rate must be >= 0")
    model.zero_grad()
    task, tok, gate, extra = model.losses(batch, cfg.budget)
    try:
        loss, report = composite_loss(task, tok, gate, cfg.loss)
    except NumericError as exc:
        raise TrainingError(f"step {step}: {exc}") from exc
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise TrainingError(f"step {step}: non-finite gradient in {name}")
    sgd(model.parameters(), cfg.lr)
    report.step = step
    report.accuracy = extra.get("accuracy")
    return report


def batch_indices(cfg: TrainConfig, n: int):
    """Per-step minibatch indices, a pure function of the seed."""
    rng = Rng(cfg.seed).spawn(0xBA7C4)
    for _ in range(cfg.steps):
        yield rng.integers(0, n, (cfg.batch,))


def evaluate(model, task: ToyTask, cfg: TrainConfig) -> SurrogateReport:
    from ..core.tensor import no_grad

    with no_grad():
        t, tok, gate, extra = model.losses((task.val_x, task.val_y), cfg.budget)
        _, report = composite_loss(t, tok, gate, cfg.loss)
    report.accuracy = extra.get("accuracy")
    return report


def train(cfg: TrainConfig, log: TextIO | None = None, model=None, task: ToyTask | None = None,
          on_step: Callable[[SurrogateReport], None] | None = None):
    """Run ``cfg.steps`` SGD steps; writes one JSON object per step to ``log``."""
    task = make_task(cfg.task_config) if task is None else task
    model = build_model(cfg) if model is None else model
    history = []
    for step, idx in enumerate(batch_indices(cfg, len(task.train_y))):
        rep = train_step(model, task.batch(idx), cfg, step)
        history.append(rep)
        if log is not None:
            log.write(json.dumps(rep.as_dict(), sort_keys=True) + "\n")
        if on_step is not None:
            on_step(rep)
    return model, history


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
