"""Finite-difference checks over every differentiable component, on small random instances."""
from __future__ import annotations

import zlib

import numpy as np

from ..anc.model import AncConfig, BranchEncoder, BranchSpec, ComplexityEstimator, budget_gate
from ..anc.router import gumbel_route
from ..core import nn
from ..core import tensor as T
from ..core.gradcheck import check_gradients
from ..core.rng import Rng
from ..core.tensor import Tensor
from ..sttf.fusion import TauPolicy, fuse_rows, policy_loss
from ..sttf.memory import _encode, full_encode
from ..sttf.model import EventGateCNN, MicroGPT, SttfConfig, SttfModel, TemporalCrossAttention
from .loss import LossConfig, composite_loss
from .tasks import ToyTaskConfig, make_task
from .toy import ToyMotionModel

TOLERANCE = 1e-3


class GradCheckError(AssertionError):
    pass


def _probe(rng: Rng, shape) -> np.ndarray:
    return rng.normal(shape)


def _weighted(out: Tensor, r: np.ndarray) -> Tensor:
    return (out * Tensor(r)).sum()


def _linear(rng):
    lin = nn.Linear(5, 3, rng)
    x = rng.normal((4, 5))
    r = _probe(rng, (4, 3))
    return lambda: _weighted(lin(Tensor(x)), r), lin.parameters()


def _gate_cnn(rng):
    gate = EventGateCNN(3, 3.0, rng)
    # counts strictly inside (0, kappa) keep the clamp away from its kinks
    e = 3.0 * (0.1 + 0.8 * rng.uniform((2, 6, 6)))
    r = _probe(rng, (1, 6, 6))
    return lambda: _weighted(T.sigmoid(gate(e)), r), gate.parameters()


def _fusion_gate(rng):
    d = 6
    prev = rng.normal((5, d))
    curr = nn.param(rng.normal((5, d)))
    w = nn.param(rng.normal((2 * d,)) * 0.5)
    r = _probe(rng, (5, d))
    # tau = -1 merges every row, so the gate sits on the differentiable path
    return lambda: _weighted(fuse_rows(prev, curr, w, -1.0)[0], r), [w, curr]


def _tau_policy(rng):
    policy = TauPolicy(8, 0.7, 0.99, rng)
    sims = [np.clip(0.85 + 0.1 * rng.normal((12,)), -1, 1) for _ in range(2)]
    budget = nn.param(np.array(0.4))
    return lambda: policy_loss(policy, sims, budget, 0.01), policy.parameters() + [budget]


def _router(rng):
    noise = rng.gumbel((3,))
    r = _probe(rng, (3,))
    p = nn.param(np.full(3, 1.0 / 3.0))
    return lambda: _weighted(gumbel_route(p, 0.5, mode="train", noise=noise, validate=False).weights, r), [p]


def _router_random(rng):
    noise = rng.gumbel((3,))
    r = _probe(rng, (3,))
    raw = rng.uniform((3,)) + 0.2
    p = nn.param(raw / raw.sum())
    return lambda: _weighted(gumbel_route(p, 0.5, mode="train", noise=noise, validate=False).weights, r), [p]


def _budget_gate(rng):
    c = 6
    w = nn.param(rng.normal((c, c)) * 0.3)
    bias = nn.param(rng.normal((c,)))
    h_prev = nn.param(rng.normal((c,)))
    h = nn.param(rng.normal((4, c)))
    b = nn.param(np.array(0.3))
    r = _probe(rng, (4, c))
    return lambda: _weighted(budget_gate(h_prev, h, b, w, bias)[0], r), [w, bias, h_prev, h, b]


def _decoder(rng):
    dec = MicroGPT(11, 8, 2, 2, 8, rng)
    ids = [1, 4, 2, 9]
    r = _probe(rng, (4, 11))
    params = [dec.tok.weight, dec.pos, dec.blocks[0].attn.wq.weight, dec.blocks[1].mlp.fc1.weight,
              dec.ln_f.gamma, dec.head.weight]
    return lambda: _weighted(T.log_softmax(dec.logits(dec.embed(ids)), axis=-1), r), params


def _cross_attention(rng):
    xattn = TemporalCrossAttention(8, 2, rng)
    text = nn.param(rng.normal((3, 8)))
    tokens = rng.normal((5, 8))
    bias = np.where(rng.uniform((3, 5)) > 0.5, -1.0, 0.0)
    r = _probe(rng, (3, 8))
    return lambda: _weighted(xattn(text, Tensor(tokens), bias), r), xattn.parameters() + [text]


def _estimator(rng):
    est = ComplexityEstimator(3, 3.0, rng)
    e = 3.0 * (0.1 + 0.8 * rng.uniform((2, 8, 8)))
    r = _probe(rng, (3,))
    return lambda: _weighted(est(e), r), est.parameters()


def _branch(rng):
    cfg = AncConfig(height=16, width=16, patch_size=8, d=8)
    enc = BranchEncoder(BranchSpec("probe", 8, 1, 2), cfg, rng)
    x = Tensor(rng.normal((cfg.n_patches, cfg.input_dim)))
    r = _probe(rng, (cfg.n_patches, cfg.d))
    params = [enc.embed.weight, enc.blocks[0].attn.wk.weight, enc.gates[0].weight, enc.gates[0].bias,
              enc.proj.weight]
    return lambda: _weighted(enc(x, 0.6)[0], r), params


def _sparse_encoder(rng):
    cfg = SttfConfig(height=16, width=16, patch_size=8, d=8, depth=2, heads=2)
    model = SttfModel(cfg, rng)
    x = rng.uniform((3, 16, 16)).astype(np.float32)
    bank = full_encode(x, model)
    idx = np.array([0, 2])
    patches = model.patchify(rng.uniform((3, 16, 16)))[idx]
    r = _probe(rng, (len(idx), cfg.d))
    params = [model.embed.proj.weight, model.blocks[0].attn.wq.weight, model.blocks[1].mlp.fc2.weight]
    return lambda: _weighted(_encode(model, patches, idx, bank)[0][-1], r), params


def _toy_objective(rng):
    task = make_task(ToyTaskConfig(n_train=8, n_val=0))
    model = ToyMotionModel(hidden=6, rng=rng)
    batch = task.batch(np.arange(3))
    cfg = LossConfig(0.05, 0.02)

    def fn():
        t, tok, gate, _ = model.losses(batch, 0.7)
        return composite_loss(t, tok, gate, cfg)[0]

    params = [model.gate.conv2.weight, model.fc1.weight, model.budget.bias, model.head.weight]
    return fn, params


COMPONENTS = {
    "linear": _linear,
    "gate_cnn": _gate_cnn,
    "fusion_gate": _fusion_gate,
    "tau_policy": _tau_policy,
    "router_uniform": _router,
    "router": _router_random,
    "budget_gate": _budget_gate,
    "decoder": _decoder,
    "cross_attention": _cross_attention,
    "complexity_estimator": _estimator,
    "anc_branch": _branch,
    "sparse_encoder": _sparse_encoder,
    "composite_loss": _toy_objective,
}


def grad_check(name: str, seed: int = 0, h: float = 1e-4) -> dict[str, float]:
    """Per-parameter relative errors for one component."""
    fn, params = COMPONENTS[name](Rng(seed).spawn(zlib.crc32(name.encode())))
    return check_gradients(fn, params, h)


def grad_check_all(seed: int = 0, names=None, strict: bool = True, h: float = 1e-4) -> dict[str, float]:
    """Max relative error per component; raises GradCheckError naming failures when ``strict``."""
    report = {}
    for name in names or COMPONENTS:
        errs = grad_check(name, seed, h)
        report[name] = max(errs.values())
    bad = {k: v for k, v in report.items() if not v < TOLERANCE}
    if strict and bad:
        raise GradCheckError("gradient check failed: " + ", ".join(f"{k} ({v:.2e})" for k, v in bad.items()))
    return report
