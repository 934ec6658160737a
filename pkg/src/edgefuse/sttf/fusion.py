"""Cross-time token fusion and the per-layer threshold policy."""
from __future__ import annotations

import numpy as np

from ..core import flops, nn
from ..core import tensor as T
from ..core.rng import Rng
from ..core.tensor import Tensor

NORM_EPS = 1e-8


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine; 0 where either row has norm below 1e-8."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    ok = (na >= NORM_EPS) & (nb >= NORM_EPS)
    out = np.zeros(len(a))
    out[ok] = (a[ok] * b[ok]).sum(axis=1) / (na[ok] * nb[ok])
    return out


def fuse_rows(prev: Tensor | np.ndarray, curr: Tensor, gate_w: Tensor, tau: float) -> tuple[Tensor, np.ndarray]:
    """Blend ``curr`` rows with ``prev`` rows wherever their cosine exceeds ``tau``.

    Returns the blended rows and a bool vector of merged rows. The gate is
    g = sigmoid(gate_w . [prev; curr]) and merged rows become g*curr + (1-g)*prev.
    """
    prev = prev if isinstance(prev, Tensor) else Tensor(prev)
    n, d = curr.shape
    # similarity costs 3 dot products plus the normalisation per row
    flops.charge(n * (6 * d + 3))
    merged = cosine_rows(prev.data, curr.data) > tau
    if not merged.any():
        return curr, merged
    sel = np.flatnonzero(merged)
    p, c = prev[sel], curr[sel]
    both = T.concat([p, c], axis=1)
    g = T.sigmoid(both @ gate_w.reshape(2 * d, 1))
    # g*c + (1-g)*p, written so identical rows come back bit-exact
    blended = p + g * (c - p)
    return T.put_rows(curr, sel, blended), merged


class TauPolicy(nn.Module):
    """Maps (mean similarity, std similarity, budget) to a threshold in [tau_min, tau_max]."""

    def __init__(self, hidden: int, tau_min: float, tau_max: float, rng: Rng):
        self.fc1 = nn.Linear(3, hidden, rng)
        self.fc2 = nn.Linear(hidden, 1, rng, std=0.01)
        self.tau_min = tau_min
        self.tau_max = tau_max

    def __call__(self, stats: Tensor | np.ndarray, budget: float | Tensor) -> Tensor:
        stats = stats if isinstance(stats, Tensor) else Tensor(np.asarray(stats, dtype=np.float64))
        n = stats.shape[0]
        if isinstance(budget, Tensor):
            b = budget.reshape(1, 1) * Tensor(np.ones((n, 1)))
        else:
            b = Tensor(np.full((n, 1), float(budget)))
        feats = T.concat([stats, b], axis=1)
        out = self.fc2(T.tanh(self.fc1(feats))).reshape(-1)
        return self.tau_min + (self.tau_max - self.tau_min) * T.sigmoid(out)

    def zero_(self) -> "TauPolicy":
        for p in self.parameters():
            p.data = np.zeros_like(p.data)
        return self


def similarity_stats(sims: np.ndarray) -> np.ndarray:
    sims = np.asarray(sims, dtype=np.float64)
    if sims.size == 0:
        return np.zeros(2)
    return np.array([sims.mean(), sims.std()])


def adapt_tau(layer_stats, budget: float, policy: TauPolicy) -> np.ndarray:
    """Per-layer fusion thresholds from (mean, std) similarity stats and a budget in [0, 1]."""
    if not 0.0 <= float(budget) <= 1.0:
        raise ValueError(f"budget {budget} outside [0, 1]")
    stats = np.asarray(layer_stats, dtype=np.float64).reshape(-1, 2)
    if not np.isfinite(stats).all():
        raise ValueError("similarity stats must be finite")
    with T.no_grad():
        return policy(stats, budget).data.astype(np.float64)


def policy_loss(policy: TauPolicy, layer_sims: list[np.ndarray], budget: float | Tensor,
                latency_weight: float, temperature: float = 0.05) -> Tensor:
    """Latency-regularised objective for the threshold policy.

    A slot fuses softly with probability sigmoid((cos - tau_l) / temperature).
    Fusing dissimilar tokens costs fidelity, (1 - cos) per fused slot; every
    slot left unfused counts towards the relaxed re-encoded token total,
    which stands in for latency.
    """
    stats = np.stack([similarity_stats(s) for s in layer_sims])
    taus = policy(stats, budget)
    distortion, tokens = [], []
    for l, sims in enumerate(layer_sims):
        c = Tensor(np.asarray(sims, dtype=np.float64))
        soft = T.sigmoid((c - taus[l]) * (1.0 / temperature))
        distortion.append((soft * (1.0 - c)).mean())
        tokens.append((1.0 - soft).sum())
    return T.stack(distortion).sum() + latency_weight * T.stack(tokens).sum()
