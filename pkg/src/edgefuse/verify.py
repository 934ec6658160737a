"""Oracle suite behind ``edgefuse verify``: each check returns (passed, measured value, tolerance)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .anc import AncModel, SMALL as ANC_SMALL, anc_step, branch_flops, gate_flops
from .anc.router import gumbel_route
from .core.checkpoint import load_checkpoint, save_checkpoint
from .core.flops import FlopsLedger
from .core.gradcheck import check_gradients
from .core.rng import Rng
from .core import nn
from .core.tensor import Tensor
from .events import EventStream, read_stream, write_stream
from .events.stream import make_events
from .sttf import SMALL as STTF_SMALL
from .sttf import NO_FUSION, SttfModel, full_encode, sttf_step
from .sttf.engine import SttfState
from .sttf.mask import ActivePatchSet, ChangeMask
from .sttf.memory import selective_update
from .train.gradcheck import grad_check_all


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22} measured={self.measured:.3e}  tolerance: {self.tolerance}"


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-12))


def dense_equivalence(seeds=range(5)) -> CheckResult:
    """All slots active: the selective path must reproduce the dense encoding."""
    worst = 0.0
    for s in seeds:
        model = SttfModel(STTF_SMALL, Rng(s))
        rng = Rng(1000 + s)
        x0 = rng.uniform((3, 64, 64)).astype(np.float32)
        x1 = rng.uniform((3, 64, 64)).astype(np.float32)
        prev = full_encode(x0, model)
        n = STTF_SMALL.n_patches
        mask = ChangeMask(np.ones((1, 64, 64), bool), np.ones(n, bool))
        active = ActivePatchSet(np.arange(n), model.patchify(x1))
        got = selective_update(active, mask, prev, model)
        want = full_encode(x1, model, 1)
        worst = max(worst, max(_rel(g, w) for g, w in zip(got.hidden, want.hidden)))
    return CheckResult("dense_equivalence", worst < 1e-5, worst, "max rel error < 1e-5")


def cache_exactness() -> CheckResult:
    model = SttfModel(STTF_SMALL, Rng(3))
    rng = Rng(33)
    x = rng.uniform((3, 64, 64)).astype(np.float32)
    e = np.zeros((2, 64, 64), np.float32)
    e[1, 5:12, 5:12] = 2
    _, state, _ = sttf_step(x, e, [1], None, model, NO_FUSION)
    led = FlopsLedger()
    _, state2, m = sttf_step(x, np.zeros_like(e), [1], state, model, NO_FUSION, ledger=led)
    same = all(np.array_equal(a, b) for a, b in zip(state.bank.hidden, state2.bank.hidden))
    enc = led.get("sparse_encoder")
    return CheckResult("cache_exactness", same and enc == 0, float(enc) + (0.0 if same else 1.0),
                       "bit-identical bank, 0 encoder FLOPs")


def router_gradients(n: int = 10) -> CheckResult:
    worst = 0.0
    rng = Rng(77)
    for _ in range(n):
        raw = rng.uniform((3,)) + 0.1
        p = nn.param(raw / raw.sum())
        noise = rng.gumbel((3,))
        r = rng.normal((3,))
        fn = lambda: (gumbel_route(p, 0.5, mode="train", noise=noise, validate=False).weights * Tensor(r)).sum()
        worst = max(worst, max(check_gradients(fn, [p], 1e-4).values()))
    return CheckResult("router_gradients", worst < 1e-3, worst, "rel error < 1e-3")


def ledger_identities() -> CheckResult:
    """Executed branch FLOPs equal the closed form; F equals the cost-ledger sum; skipped branches cost 0."""
    model = AncModel(ANC_SMALL)
    rng = Rng(5)
    x = rng.uniform((3, 64, 64)).astype(np.float32)
    e = (rng.uniform((2, 64, 64)) * 3).astype(np.float32)
    worst = 0
    for w in ([1, 0, 0], [0.5, 0.45, 0.05], [0.2, 0.3, 0.5]):
        _, F, m = anc_step(x, e, [1], model, force_weights=w)
        for i, spec in enumerate(model.cfg.branches):
            ran = m.executed.get(f"branch.{spec.name}", 0)
            want = branch_flops(spec, model.cfg) if w[i] > 0.1 else 0
            worst = max(worst, abs(ran - want))
        gates = sum(gate_flops(s, model.cfg) for i, s in enumerate(model.cfg.branches) if w[i] > 0.1)
        worst = max(worst, abs(m.executed.get("budget_gate", 0) - gates), abs(F - sum(m.cost.values())))
    return CheckResult("ledger_identities", worst == 0, float(worst), "exact to the unit")


def format_roundtrips() -> CheckResult:
    rng = Rng(9)
    n = 500
    ev = make_events(np.sort(rng.integers(0, 1 << 40, (n,))).astype(np.uint64), rng.integers(0, 128, (n,)),
                     rng.integers(0, 96, (n,)), rng.integers(0, 2, (n,)))
    s = EventStream(128, 96, ev)
    buf = write_stream(s)
    ok = write_stream(read_stream(buf)) == buf
    tensors = {"a": rng.normal((3, 4)).astype(np.float32), "b": np.array([np.nan, -0.0, np.inf], np.float32)}
    cbuf = save_checkpoint(tensors)
    ok &= save_checkpoint(load_checkpoint(cbuf)) == cbuf
    return CheckResult("format_roundtrips", bool(ok), 0.0 if ok else 1.0, "byte-identical re-encode")


def gradient_suite() -> CheckResult:
    report = grad_check_all(0, strict=False)
    worst = max(report.values())
    return CheckResult("gradient_suite", worst < 1e-3, worst, "every component rel error < 1e-3")


def state_roundtrip() -> CheckResult:
    model = SttfModel(STTF_SMALL, Rng(4))
    rng = Rng(44)
    x = rng.uniform((3, 64, 64)).astype(np.float32)
    e = (rng.uniform((2, 64, 64)) > 0.97).astype(np.float32)
    _, state, _ = sttf_step(x, e, [1], None, model)
    back = SttfState.from_tensors(load_checkpoint(save_checkpoint(state.to_tensors())))
    same = all(np.array_equal(a, b) for a, b in zip(state.bank.hidden, back.bank.hidden))
    same &= np.array_equal(state.bank.stale_age, back.bank.stale_age)
    return CheckResult("state_roundtrip", bool(same), 0.0 if same else 1.0, "bit-exact")


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "dense_equivalence": dense_equivalence,
    "cache_exactness": cache_exactness,
    "router_gradients": router_gradients,
    "ledger_identities": ledger_identities,
    "format_roundtrips": format_roundtrips,
    "state_roundtrip": state_roundtrip,
    "gradient_suite": gradient_suite,
}


def run_checks(names=None) -> list[CheckResult]:
    return [CHECKS[n]() for n in (names or CHECKS)]
