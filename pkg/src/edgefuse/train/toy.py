"""Toy-scale models that exercise the gate, budget gates and decoder under the composite loss."""
from __future__ import annotations

import numpy as np

from ..anc.model import BudgetGate, budget_gate
from ..core import nn
from ..core import tensor as T
from ..core.rng import Rng
from ..core.tensor import Tensor
from ..sttf.model import EventGateCNN, MicroGPT


class ToyMotionModel(nn.Module):
    """Event gate -> soft patch mask -> per-patch MLP -> masked pooling -> budget gate -> classifier.

    A patch's soft mask is the noisy-OR of its pixel gate probabilities,
    1 - prod(1 - p), so it approaches 1 as soon as any pixel fires and the
    relaxed token count lies in [0, n_patches]. Each patch is described by
    six numbers: per-polarity event counts and their first moments in
    centred patch-unit coordinates. Pooling those makes the motion
    direction linearly readable.
    """

    DESC_SCALE = 0.25

    def __init__(self, size: int = 32, patch: int = 8, hidden: int = 32, classes: int = 4,
                 gate_channels: int = 4, gate_bias: float = 2.0, mask_bias: float = -6.0,
                 rng: Rng | None = None):
        rng = Rng(0) if rng is None else rng
        self.size = size
        self.patch = patch
        self.gate = EventGateCNN(gate_channels, 1.0, rng.spawn(1)).calibrate(bias=mask_bias)
        self.fc1 = nn.Linear(6, hidden, rng.spawn(2))
        self.fc2 = nn.Linear(hidden, hidden, rng.spawn(3))
        self.budget = BudgetGate(hidden, rng.spawn(4), gate_bias)
        self.head = nn.Linear(hidden, classes, rng.spawn(5))

    @property
    def n_patches(self) -> int:
        return (self.size // self.patch) ** 2

    def patch_inputs(self, e: np.ndarray) -> np.ndarray:
        p, g = self.patch, self.size // self.patch
        c = (np.arange(self.size, dtype=np.float32) + 0.5) / p - g / 2
        yy, xx = np.meshgrid(c, c, indexing="ij")
        full = np.concatenate([e, e * xx, e * yy], axis=0)
        return full.reshape(6, g, p, g, p).sum(axis=(2, 4)).reshape(6, -1).T * self.DESC_SCALE

    def soft_mask(self, e: np.ndarray) -> Tensor:
        """Per-patch soft activation probabilities for one event frame."""
        p, g = self.patch, self.size // self.patch
        log_off = T.log(T.sigmoid(-self.gate(e))).reshape(g, p, g, p).sum(axis=(1, 3))
        return 1.0 - T.exp(log_off.reshape(-1))

    def losses(self, batch, b: float = 1.0):
        xs, ys = batch
        pooled, tokens = [], []
        for e in xs:
            m = self.soft_mask(e)
            feats = self.fc2(T.gelu(self.fc1(Tensor(self.patch_inputs(e)))))
            pooled.append((feats * m.reshape(-1, 1)).sum(axis=0))
            tokens.append(m.sum())
        h = T.stack(pooled)
        gated, a = budget_gate(h, h, b, self.budget.weight, self.budget.bias)  # per-sample gates
        logits = self.head(gated)
        task = nn.cross_entropy(logits, ys)
        token_sur = T.stack(tokens).mean()
        gate_sur = a.sum(axis=1).mean()
        acc = float((np.argmax(logits.data, axis=1) == np.asarray(ys)).mean())
        return task, token_sur, gate_sur, {"accuracy": acc}


class ToyEchoModel(nn.Module):
    """Decoder-only echo: predict the current token at every position."""

    def __init__(self, vocab: int = 16, d: int = 32, layers: int = 2, heads: int = 2, max_len: int = 16,
                 rng: Rng | None = None):
        rng = Rng(0) if rng is None else rng
        self.decoder = MicroGPT(vocab, d, layers, heads, max_len, rng.spawn(1))

    def losses(self, batch, b: float = 1.0):
        xs, ys = batch
        total, correct, count = [], 0, 0
        for x, y in zip(xs, ys):
            logits = self.decoder.logits(self.decoder.embed(x))
            total.append(nn.cross_entropy(logits, y))
            correct += int((np.argmax(logits.data, axis=1) == y).sum())
            count += len(y)
        zero = Tensor(np.zeros(()))
        return T.stack(total).mean(), zero, zero, {"accuracy": correct / count}
