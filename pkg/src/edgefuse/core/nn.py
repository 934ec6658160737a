"""Small layer library over ``tensor``: modules own named parameters, nothing else."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

NEG_INF = -1e9


def param(data, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        if strict and missing:
            raise KeyError(f"missing parameters: {missing[:5]}")
        for k, arr in state.items():
            if k not in params:
                if strict:
                    raise KeyError(f"unexpected parameter {k!r}")
                continue
            p = params[k]
            if p.shape != tuple(arr.shape):
                raise T.ShapeError(f"parameter {k!r}: expected {p.shape}, got {tuple(arr.shape)}")
            p.data = np.array(arr, dtype=np.float32)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: Rng, bias: bool = True, std: float | None = None):
        std = 1.0 / math.sqrt(d_in) if std is None else std
        self.weight = param(rng.normal((d_in, d_out)) * std)
        self.bias = param(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: Rng, stride: int = 1, pad: int = 0):
        std = 1.0 / math.sqrt(c_in * k * k)
        self.weight = param(rng.normal((c_out, c_in, k, k)) * std)
        self.bias = param(np.zeros((c_out, 1, 1)))
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.stride, self.pad) + self.bias


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = param(np.ones(d))
        self.beta = param(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: Rng, std: float = 0.1):
        self.weight = param(rng.normal((n, d)) * std)

    def __call__(self, ids) -> Tensor:
        return self.weight[np.asarray(ids, dtype=np.int64)]


class MLP(Module):
    def __init__(self, d: int, hidden: int, rng: Rng):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class Attention(Module):
    """Multi-head attention: queries from one row set, keys/values from another."""

    def __init__(self, d: int, heads: int, rng: Rng):
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)

    def __call__(self, xq: Tensor, xkv: Tensor, bias: np.ndarray | None = None) -> Tensor:
        return self.attend(self.wq(xq), self.wk(xkv), self.wv(xkv), bias)

    def attend(self, q: Tensor, k: Tensor, v: Tensor, bias: np.ndarray | None = None,
               probs_out: list | None = None) -> Tensor:
        """Attention over already-projected q/k/v (lets callers cache k and v)."""
        d = q.shape[1]
        dh = d // self.heads
        scale = 1.0 / math.sqrt(dh)
        outs = []
        for h in range(self.heads):
            cols = slice(h * dh, (h + 1) * dh)
            s = (q[:, cols] @ k[:, cols].T) * scale
            if bias is not None:
                s = s + Tensor(bias)
            p = T.softmax(s, axis=-1)
            if probs_out is not None:
                probs_out.append(p.data)
            outs.append(p @ v[:, cols])
        return self.wo(T.concat(outs, axis=1))


def causal_bias(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), NEG_INF, dtype=np.float32), k=1)


class Block(Module):
    """Pre-norm transformer block; ``kv`` defaults to the query rows (self-attention)."""

    def __init__(self, d: int, heads: int, rng: Rng, mlp_ratio: int = 2):
        self.ln1 = LayerNorm(d)
        self.attn = Attention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.mlp = MLP(d, d * mlp_ratio, rng)

    def __call__(self, x: Tensor, kv: Tensor | None = None, bias: np.ndarray | None = None) -> Tensor:
        hq = self.ln1(x)
        hkv = hq if kv is None else self.ln1(kv)
        x = x + self.attn(hq, hkv, bias)
        return x + self.mlp(self.ln2(x))


def cross_entropy(logits: Tensor, targets) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64)
    lp = T.log_softmax(logits, axis=-1)
    picked = lp[np.arange(len(targets)), targets]
    return -picked.mean()
