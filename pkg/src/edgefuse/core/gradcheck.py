"""Central finite-difference gradient checks, run in float64."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import flops
from .tensor import Tensor, precision


ABS_FLOOR = 1e-6


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """max|a - b| / max(max|a|, max|b|, ABS_FLOOR).

    The floor keeps gradients that are analytically zero (e.g. key biases
    under softmax) from turning round-off into a relative error of 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), ABS_FLOOR)
    return float(np.abs(a - b).max() / scale)


def numeric_grad(fn: Callable[[], Tensor], p: Tensor, h: float = 1e-3) -> np.ndarray:
    g = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(fn().data.sum())
        flat[i] = old - h
        fm = float(fn().data.sum())
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-3,
) -> dict[str, float]:
    """Compare autodiff against central differences for every tensor in ``params``.

    Parameters are promoted to float64 for the duration of the check and
    restored afterwards. Returns {name: max relative error}.
    """
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.float64)
            p.grad = None
        with precision(np.float64), flops.paused():
            loss = fn()
            loss.backward()
            errors = {}
            for i, p in enumerate(params):
                analytic = np.zeros_like(p.data) if p.grad is None else p.grad
                numeric = numeric_grad(fn, p, h)
                errors[p.name or f"param{i}"] = rel_error(analytic, numeric)
        return errors
    finally:
        for p, d in zip(params, saved):
            p.data = d
            p.grad = None
