import numpy as np
from hypothesis import given, strategies as st

from edgefuse.core.rng import Rng


def test_splitmix64_reference_values():
    r = Rng(0)
    assert [r.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


@given(st.integers(0, 2**64 - 1), st.integers(1, 40))
def test_vector_draws_match_scalar_draws(seed, n):
    a, b = Rng(seed), Rng(seed)
    assert [int(v) for v in a.next_u64(n)] == [b.next_u64() for _ in range(n)]
    assert a.state == b.state


@given(st.integers(0, 2**32))
def test_uniform_open_interval_and_integers_range(seed):
    r = Rng(seed)
    u = r.uniform((200,))
    assert (u > 0).all() and (u < 1).all()
    k = r.integers(-3, 4, (200,))
    assert k.min() >= -3 and k.max() < 4


def test_permutation_and_spawn():
    r = Rng(7)
    assert sorted(r.permutation(50).tolist()) == list(range(50))
    base = Rng(7)
    assert base.spawn(1).next_u64() != base.spawn(2).next_u64()
    assert Rng(7).spawn(3).next_u64() == Rng(7).spawn(3).next_u64()


def test_gumbel_moments():
    g = Rng(3).gumbel((200_000,))
    assert abs(g.mean() - np.euler_gamma) < 0.01
    assert abs(g.var() - np.pi ** 2 / 6) < 0.03
