import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bqcsim.angle import ALL, PI, ZERO, Angle, add, delta, mf_encode, negate, sample_uniform

angles = st.integers(0, 7).map(Angle)
bits = st.integers(0, 1)


def test_normalized_on_construction():
    assert Angle(9).eighths == 1
    assert Angle(-1).eighths == 7
    assert PI.eighths == 4


@pytest.mark.parametrize("a,b,want", [(1, 0, 1), (6, 3, 1), (4, 4, 0)])
def test_add_examples(a, b, want):
    assert add(Angle(a), Angle(b)) == Angle(want)


@pytest.mark.parametrize("t,x,z,want", [(1, 0, 0, 1), (1, 1, 1, 3), (0, 1, 0, 0)])
def test_mf_encode_examples(t, x, z, want):
    assert mf_encode(Angle(t), x, z) == Angle(want)


@pytest.mark.parametrize("t,p,r,want", [(0, 0, 0, 0), (2, 6, 1, 4), (1, 2, 1, 7)])
def test_delta_examples(t, p, r, want):
    assert delta(Angle(t), Angle(p), r) == Angle(want)


@given(angles)
def test_negate_is_additive_inverse(a):
    assert add(a, negate(a)) == ZERO
    assert negate(a).eighths == (8 - a.eighths) % 8


@given(angles, angles)
def test_radians_match_eighths(a, b):
    assert np.isclose(np.exp(1j * (a + b).radians), np.exp(1j * (a.radians + b.radians)))


@pytest.mark.parametrize("x,z", list(itertools.product((0, 1), repeat=2)))
def test_mf_encode_is_bijection(x, z):
    assert {mf_encode(t, x, z) for t in ALL} == set(ALL)


@given(angles, bits, bits)
def test_mf_encode_formula(t, x, z):
    assert mf_encode(t, x, z).eighths == ((-1) ** x * t.eighths + 4 * z) % 8


@pytest.mark.parametrize("phi", ALL)
def test_delta_two_to_one_and_uniform(phi):
    counts = {}
    for t, r in itertools.product(ALL, (0, 1)):
        d = delta(t, phi, r)
        counts[d] = counts.get(d, 0) + 1
    assert counts == {a: 2 for a in ALL}


def test_sample_uniform_golden_seed_42():
    rng = np.random.default_rng(42)
    assert [sample_uniform(rng).eighths for _ in range(3)] == [0, 6, 5]


def test_sample_uniform_deterministic():
    a = [sample_uniform(np.random.default_rng(7)) for _ in range(1)]
    b = [sample_uniform(np.random.default_rng(7)) for _ in range(1)]
    assert a == b


def test_sample_uniform_counts():
    rng = np.random.default_rng(2024)
    counts = np.bincount([sample_uniform(rng).eighths for _ in range(8000)], minlength=8)
    assert all(900 <= c <= 1100 for c in counts)
