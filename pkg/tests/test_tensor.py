import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgefuse.core import ContractError, FlopsLedger, ShapeError, Tensor, flops, nn, precision
from edgefuse.core import tensor as T
from edgefuse.core.gradcheck import check_gradients, rel_error
from edgefuse.core.rng import Rng


def charged(fn):
    led = FlopsLedger()
    with led.recording():
        out = fn()
    return out, led


def test_matmul_identity_and_hand_example():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    eye = Tensor(np.eye(2))
    assert np.array_equal((eye @ a).data, a.data)
    out, led = charged(lambda: a @ b)
    assert out.data.tolist() == [[19, 22], [43, 50]]
    assert led.total == 16


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
@settings(max_examples=25)
def test_matmul_flops_formula(m, k, n):
    _, led = charged(lambda: Tensor(np.ones((m, k))) @ Tensor(np.ones((k, n))))
    assert led.total == 2 * m * k * n


def naive_conv(x, w, stride, pad):
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            out[o, i, j] += xp[c, i * stride + a, j * stride + b] * w[o, c, a, b]
    return out


def test_conv2d_zero_and_identity():
    x = Tensor(np.zeros((2, 5, 5)))
    w = Tensor(np.ones((3, 2, 3, 3)))
    assert not T.conv2d(x, w).data.any()
    img = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
    assert np.array_equal(T.conv2d(Tensor(img), Tensor(np.ones((1, 1, 1, 1)))).data, img)


def test_conv2d_matches_brute_force(rng):
    x = rng.normal((1, 4, 4))
    w = rng.normal((1, 1, 2, 2))
    out, led = charged(lambda: T.conv2d(Tensor(x), Tensor(w)))
    np.testing.assert_allclose(out.data, naive_conv(x, w, 1, 0), rtol=1e-5, atol=1e-6)
    assert led.total == 2 * 1 * 1 * 2 * 2 * 3 * 3


@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 2), st.integers(4, 7))
@settings(max_examples=20)
def test_conv2d_strided_padded_brute_force(c, stride, pad, size):
    r = Rng(size * 31 + stride * 7 + pad)
    x = r.normal((c, size, size))
    w = r.normal((2, c, 3, 3))
    got = T.conv2d(Tensor(x), Tensor(w), stride, pad).data
    np.testing.assert_allclose(got, naive_conv(x, w, stride, pad), rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("stride", [0, -1])
def test_conv2d_rejects_bad_stride(stride):
    with pytest.raises(ValueError):
        T.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))), stride=stride)


def test_conv2d_kernel_must_fit():
    with pytest.raises(ShapeError):
        T.conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


def test_backward_sum_and_square():
    x = nn.param([1.0, -2.0, 3.0])
    x.sum().backward()
    assert x.grad.tolist() == [1, 1, 1]
    y = nn.param(3.0)
    (y * y).backward()
    assert float(y.grad) == 6.0


def test_backward_accumulates():
    x = nn.param([2.0])
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()
    assert x.grad.tolist() == [6.0]


def test_backward_rejects_non_scalar():
    x = nn.param([1.0, 2.0])
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_three_layer_mlp_gradcheck(rng):
    l1, l2, l3 = nn.Linear(4, 6, rng), nn.Linear(6, 5, rng), nn.Linear(5, 2, rng)
    x = rng.normal((3, 4))
    fn = lambda: T.tanh(l3(T.tanh(l2(T.tanh(l1(Tensor(x))))))).sum()
    params = l1.parameters() + l2.parameters() + l3.parameters()
    errs = check_gradients(fn, params, h=1e-3)
    assert max(errs.values()) < 1e-3


UNARY = {
    "exp": lambda a: T.exp(a * 0.5),
    "log": lambda a: T.log(a * a + 1.0),
    "sqrt": lambda a: T.sqrt(a * a + 1.0),
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "gelu": T.gelu,
    "softmax": lambda a: T.softmax(a, axis=-1),
    "log_softmax": lambda a: T.log_softmax(a, axis=-1),
    "power": lambda a: (a * a + 1.0) ** 1.5,
    "mean": lambda a: a.mean(axis=0),
    "div": lambda a: a / (a * a + 2.0),
    "transpose": lambda a: a.T @ a,
    "index": lambda a: a[np.array([0, 0, 1])] * 2.0,
    "concat": lambda a: T.concat([a, a * 2.0], axis=1),
    "stack": lambda a: T.stack([a, a * a]),
    "put_rows": lambda a: T.put_rows(a * 1.0, np.array([1]), a[np.array([0])] * 3.0),
    "where": lambda a: T.where(a.data > 0, a * 2.0, a * a),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=8)
def test_op_gradients_match_finite_differences(name, seed):
    r = Rng(seed)
    a = nn.param(r.normal((3, 4)))
    probe = r.normal(UNARY[name](Tensor(a.data)).shape)
    errs = check_gradients(lambda: (UNARY[name](a) * Tensor(probe)).sum(), [a], h=1e-4)
    assert errs["param0"] < 1e-3


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=12))
def test_softmax_rows_sum_to_one(vals):
    s = T.softmax(Tensor(np.array([vals])), axis=-1).data
    assert abs(s.sum() - 1.0) < 1e-6


@given(st.floats(-80, 80))
def test_sigmoid_range(v):
    with precision(np.float64):
        s = float(T.sigmoid(Tensor(np.array([v]))).data[0])
    # beyond |v| ~ 36 the float64 result rounds onto the endpoint
    assert 0.0 <= s <= 1.0
    if abs(v) <= 30:
        assert 0.0 < s < 1.0


def test_float32_default_and_float64_precision():
    assert Tensor([1.0]).data.dtype == np.float32
    with precision(np.float64):
        assert Tensor(np.array([1.0], np.float32)).data.dtype == np.float64


def test_no_grad_builds_no_graph():
    x = nn.param([1.0, 2.0])
    with T.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_rel_error_floor():
    assert rel_error(np.zeros(3), np.full(3, 1e-9)) < 1e-2
    assert rel_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)


def test_ledger_stages_and_determinism():
    def run():
        led = FlopsLedger()
        with led.recording():
            with flops.stage("a"):
                Tensor(np.ones((2, 3))) @ Tensor(np.ones((3, 4)))
            with flops.stage("b"):
                T.softmax(Tensor(np.ones((2, 5))))
            T.exp(Tensor(np.ones(7)))
        return led

    a, b = run(), run()
    assert a.as_dict() == b.as_dict() == {"a": 48, "b": 40, "other": 7}
    assert a.total == 95


def test_ledger_rejects_negative_and_pauses():
    led = FlopsLedger()
    with pytest.raises(ValueError):
        led.add("x", -1)
    with led.recording(), flops.paused():
        T.exp(Tensor(np.ones(4)))
    assert led.total == 0


def test_backward_is_not_charged():
    x = nn.param(np.ones((3, 3)))
    led = FlopsLedger()
    with led.recording():
        y = (x @ x).sum()
    before = led.total
    with led.recording():
        y.backward()
    assert led.total == before


def test_layers_flops_match_hand_counts():
    r = Rng(0)
    lin = nn.Linear(4, 3, r)
    _, led = charged(lambda: lin(Tensor(np.ones((5, 4)))))
    assert led.total == 2 * 5 * 4 * 3 + 5 * 3
    ln = nn.LayerNorm(6)
    _, led = charged(lambda: ln(Tensor(np.ones((2, 6)))))
    assert led.total == 7 * 2 * 6 + 4 * 2


def test_layernorm_normalises(rng):
    ln = nn.LayerNorm(8)
    out = ln(Tensor(rng.normal((4, 8)) * 5 + 3)).data
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-5)
    np.testing.assert_allclose(out.std(axis=1), 1, atol=1e-3)


def test_state_dict_roundtrip_and_strictness(rng):
    a = nn.MLP(4, 8, rng)
    b = nn.MLP(4, 8, Rng(99))
    b.load_state_dict(a.state_dict())
    for (ka, va), (kb, vb) in zip(a.named_parameters(), b.named_parameters()):
        assert ka == kb and np.array_equal(va.data, vb.data)
    with pytest.raises(KeyError):
        b.load_state_dict({"fc1.weight": a.fc1.weight.data})
    with pytest.raises(ShapeError):
        b.load_state_dict({**a.state_dict(), "fc1.bias": np.zeros(3)})
