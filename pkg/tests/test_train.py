import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgefuse.core import nn
from edgefuse.core.tensor import Tensor
from edgefuse.train import (COMPONENTS, DIRECTIONS, GradCheckError, LossConfig, NumericError, ToyTaskConfig,
                            TrainConfig, TrainingError, build_model, composite_loss, evaluate, grad_check,
                            grad_check_all, make_task, motion_frame, train, train_step)
from edgefuse.train.tasks import ToyTask


# --- composite loss --------------------------------------------------------

def test_zero_lambdas_give_task_loss():
    loss, rep = composite_loss(1.7, 10.0, 5.0, LossConfig(0.0, 0.0))
    assert loss == 1.7 and rep.total == 1.7


def test_hand_arithmetic():
    _, rep = composite_loss(1.0, 10.0, 5.0, LossConfig(0.01, 0.02))
    assert rep.total == pytest.approx(1.2, abs=1e-12)


def test_zero_surrogates():
    _, rep = composite_loss(0.4, 0.0, 0.0, LossConfig(3.0, 7.0))
    assert rep.total == 0.4


@given(st.floats(0, 5), st.floats(0, 50), st.floats(0, 50), st.floats(0, 1), st.floats(0, 1))
def test_linear_in_lambdas(task, tok, gate, l1, l2):
    _, rep = composite_loss(task, tok, gate, LossConfig(l1, l2))
    assert rep.total == pytest.approx(task + l1 * tok + l2 * gate, rel=1e-12, abs=1e-12)


def test_tensor_terms_backprop():
    a = nn.param(np.array(2.0))
    loss, _ = composite_loss(a * a, a * 3.0, a, LossConfig(0.5, 0.25))
    loss.backward()
    assert float(a.grad) == pytest.approx(2 * 2 + 1.5 + 0.25)


@pytest.mark.parametrize("pos,name", [(0, "task loss"), (1, "token surrogate"), (2, "gate surrogate")])
def test_nan_names_the_term(pos, name):
    args = [1.0, 1.0, 1.0]
    args[pos] = float("nan")
    with pytest.raises(NumericError, match=name):
        composite_loss(*args)


@pytest.mark.parametrize("kw", [dict(lambda1=-1.0), dict(lambda2=float("inf")), dict(latency_weight=-0.1)])
def test_loss_config_validation(kw):
    with pytest.raises(ValueError):
        LossConfig(**kw)


# --- toy tasks -------------------------------------------------------------

def test_motion_frame_edges():
    f = motion_frame(4, 4, 0, 16, 4, 2)  # moving right by 2
    assert f.shape == (2, 16, 16)
    assert f[0].sum() == 8 and f[1].sum() == 8
    assert f[1, 4:8, 8:10].all() and f[0, 4:8, 4:6].all()


@pytest.mark.parametrize("kind", ["motion", "echo"])
def test_splits_disjoint(kind):
    task = make_task(ToyTaskConfig(kind=kind, n_train=64, n_val=32))
    train_keys = {tuple(np.atleast_1d(k)) for k in task.train_keys}
    val_keys = {tuple(np.atleast_1d(k)) for k in task.val_keys}
    assert len(train_keys) == 64 and not train_keys & val_keys


def test_motion_labels_match_frames():
    task = make_task(ToyTaskConfig(n_train=40, n_val=0))
    for x, y in zip(task.train_x, task.train_y):
        on = np.argwhere(x[1]).mean(axis=0)
        off = np.argwhere(x[0]).mean(axis=0)
        d = np.sign(on - off).astype(int)
        assert tuple(d) == DIRECTIONS[int(y)]


def test_task_deterministic():
    a, b = make_task(ToyTaskConfig(seed=3)), make_task(ToyTaskConfig(seed=3))
    assert np.array_equal(a.train_x, b.train_x) and np.array_equal(a.val_y, b.val_y)


# --- training --------------------------------------------------------------

def small_cfg(**kw):
    return TrainConfig(**{"steps": 5, "n_train": 32, "n_val": 8, "hidden": 8, **kw})


def test_lr_zero_leaves_weights():
    cfg = small_cfg(lr=0.0)
    model = build_model(cfg)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    train(cfg, model=model)
    after = model.state_dict()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_training_deterministic():
    cfg = small_cfg()
    a, ha = train(cfg)
    b, hb = train(cfg)
    assert [r.as_dict() for r in ha] == [r.as_dict() for r in hb]
    sa, sb = a.state_dict(), b.state_dict()
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)


def test_jsonl_log():
    log = io.StringIO()
    train(small_cfg(), log=log)
    rows = [json.loads(line) for line in log.getvalue().splitlines()]
    assert [r["step"] for r in rows] == list(range(5))
    for r in rows:
        assert r["total"] == pytest.approx(r["task_loss"] + 0.01 * r["token_l0_relaxed"] + 0.01 * r["gate_l0_relaxed"])


def test_token_surrogate_bounded():
    cfg = small_cfg()
    model = build_model(cfg)
    task = make_task(cfg.task_config)
    rep = evaluate(model, task, cfg)
    n_patches = (32 // 8) ** 2
    assert 0 <= rep.token_l0_relaxed <= n_patches


def test_nan_loss_raises_with_step():
    cfg = small_cfg()
    model = build_model(cfg)
    task = make_task(cfg.task_config)
    model.head.bias.data[:] = np.nan
    with pytest.raises(TrainingError, match="step 3"):
        train_step(model, task.batch(np.arange(4)), cfg, step=3)


def test_echo_task_trains():
    cfg = small_cfg(task="echo", steps=60, lr=0.5)
    _, hist = train(cfg)
    assert hist[-1].task_loss < hist[0].task_loss
    assert hist[0].token_l0_relaxed == 0.0


@pytest.mark.parametrize("kw", [dict(lr=-0.1), dict(batch=0), dict(lambda1=-1.0)])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# --- gradient suite --------------------------------------------------------

def test_linear_is_nearly_exact():
    assert max(grad_check("linear", 0).values()) < 1e-6


@pytest.mark.parametrize("name", ["router_uniform", "budget_gate"])
def test_named_components(name):
    assert max(grad_check(name, 1).values()) < 1e-3


def test_budget_gate_checks_b():
    errs = grad_check("budget_gate", 2)
    assert "param4" in errs and errs["param4"] < 1e-3


def test_grad_check_all_passes():
    report = grad_check_all(0)
    assert set(report) == set(COMPONENTS)
    assert max(report.values()) < 1e-3


def test_grad_check_names_failures(monkeypatch):
    def broken(rng):
        p = nn.param(np.array([1.0, 2.0]))
        # the square goes through a detached copy: analytic grad 0, numeric grad 2p
        return lambda: (p * 0.0).sum() + Tensor(p.data ** 2).sum(), [p]

    monkeypatch.setitem(COMPONENTS, "broken", broken)
    with pytest.raises(GradCheckError, match="broken"):
        grad_check_all(0, names=["linear", "broken"])
