import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consym.errors import DimensionError, ResourceLimitError
from consym.model import Context
from consym.permgroup import (PermGroup, Permutation, PrSampler, apply, exact_uniform_orbit_sample,
                              group_from_cycles, orbit, pr_step, sample_orbit, state_key)

perms = st.integers(1, 7).flatmap(lambda n: st.permutations(list(range(n))).map(
    lambda p: Permutation(tuple(p))))


def test_composition_applies_right_factor_first():
    p = Permutation.from_cycles(3, (0, 1))
    q = Permutation.from_cycles(3, (1, 2))
    assert (p * q).image == tuple(p(q(i)) for i in range(3))
    assert (p * q).image == (1, 2, 0)


@settings(max_examples=50)
@given(perms)
def test_inverse(p):
    ident = Permutation.identity(p.degree)
    assert p * p.inverse() == ident and p.inverse() * p == ident


@settings(max_examples=50)
@given(st.data())
def test_apply_is_an_action(data):
    n = data.draw(st.integers(1, 6))
    p = Permutation(tuple(data.draw(st.permutations(list(range(n))))))
    q = Permutation(tuple(data.draw(st.permutations(list(range(n))))))
    s = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
    assert np.array_equal(apply(p * q, s), apply(p, apply(q, s)))


def test_apply_transports_values():
    p = Permutation.from_cycles(3, (0, 1, 2))
    assert apply(p, [1, 0, 0]).tolist() == [0, 1, 0]
    with pytest.raises(DimensionError):
        apply(p, [1, 0])


def test_cycle_notation():
    p = Permutation.from_cycles(5, (0, 2), (1, 3, 4))
    assert p.cycle_notation() == "(0 2)(1 3 4)"
    assert p.cycle_notation("abcde") == "(a c)(b d e)"
    assert Permutation.identity(3).cycle_notation() == "()"


def test_not_a_permutation():
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))


def test_closure_sizes():
    s4 = group_from_cycles(4, [[(0, 1)], [(0, 1, 2, 3)]])
    assert len(s4.closure()) == 24
    assert s4.support == (0, 1, 2, 3)
    with pytest.raises(ResourceLimitError):
        group_from_cycles(10, [[(0, 1)], [tuple(range(10))]]).closure(cap=1000)


def test_orbit_of_states():
    g = group_from_cycles(4, [[(0, 1)], [(1, 2)]])
    assert len(orbit(g, [1, 0, 0, 1])) == 3
    assert len(orbit(g, [1, 1, 1, 0])) == 1
    assert orbit(g, [1, 0, 0, 1], Context(((3, 0),))) == set()


def test_fixed_set_respected():
    with pytest.raises(AssertionError):
        PermGroup(3, (Permutation.from_cycles(3, (0, 1)),), frozenset({0}))


def test_pr_slots_cover_generators():
    gens = [[(i, i + 1)] for i in range(14)]
    g = group_from_cycles(15, gens)
    s = PrSampler(g, k=10, seed=1)
    assert s.k == 14


def test_pr_elements_stay_in_group(rng):
    g = group_from_cycles(5, [[(0, 1)], [(2, 3, 4)]])
    members = g.closure()
    s = PrSampler(g, seed=3)
    for _ in range(200):
        assert pr_step(s) in members


def test_trivial_sampler_is_identity(rng):
    s = PrSampler(PermGroup(3), seed=0)
    assert s.trivial
    assert sample_orbit(s.group, [1, 0, 1], s).tolist() == [1, 0, 1]


def test_exact_sampler_draws_orbit_members(rng):
    g = group_from_cycles(4, [[(0, 1, 2, 3)]])
    orb = orbit(g, [1, 1, 0, 0])
    for _ in range(50):
        assert state_key(exact_uniform_orbit_sample(g, [1, 1, 0, 0], rng)) in orb
