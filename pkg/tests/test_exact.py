from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from helpers import instances, random_instance
from hiring._backend import available_backends, get_backend
from hiring.core import VIRTUAL, Instance, State, three_applicant_example, tree_reward, validate_tree
from hiring.exact import (
    OracleRefused,
    exact_memo,
    greedy_dp,
    greedy_value,
    optimal_exact,
    optimal_value,
    optimal_value_rational,
    value_order,
)
from oracles.brute import all_policy_trees, brute_optimum, float_reward


def test_worked_example_optimum():
    inst, _ = three_applicant_example()
    value, tree = optimal_exact(inst)
    assert value == 5.0
    assert brute_optimum(inst.values, inst.probs, inst.k, inst.T) == 5
    assert tree_reward(tree, inst) == 5.0


@pytest.mark.parametrize(
    "values, probs, k, T, expected",
    [
        ((4.0,), (0.25,), 1, 1, 1.0),
        ((1.0, 1.0), (0.5, 0.5), 1, 2, 0.75),
        ((3.0, 1.0), (1.0, 1.0), 2, 1, 3.0),
        ((3.0, 1.0), (0.0, 0.0), 2, 2, 0.0),
        ((2.0, 5.0), (1.0, 1.0), 1, 2, 5.0),
    ],
)
def test_small_closed_forms(values, probs, k, T, expected):
    assert optimal_value(Instance(values, probs, k, T)) == expected


@given(instances(n_max=4, T_max=4, k_max=3))
@settings(max_examples=40)
def test_matches_exhaustive_enumeration(inst):
    value = optimal_value(inst)
    best_float = max(float_reward(tr, inst.values, inst.probs) for tr in all_policy_trees(inst.n, inst.k, inst.T))
    assert value == best_float
    assert optimal_value_rational(inst) == brute_optimum(inst.values, inst.probs, inst.k, inst.T)


@given(instances(n_max=7, T_max=7))
def test_tree_is_valid_and_attains_value(inst):
    res = optimal_exact(inst)
    assert validate_tree(res.tree, inst, exact_states=True) is None
    assert tree_reward(res.tree, inst) == pytest.approx(res.value, rel=1e-12, abs=1e-15)


def test_memo_lookup():
    inst, _ = three_applicant_example()
    memo = exact_memo(inst)
    assert memo[inst.root_state()] == (5.0, memo.choice[2, 0b111])
    assert memo[State(3, 2, 0b001)] == (0.0, VIRTUAL)
    with pytest.raises(KeyError):
        memo[State(1, 2, 0b011)]  # one applicant gone at stage 1 is unreachable


def test_oracle_refuses_large_instances():
    inst = Instance([1.0] * 21, [0.5] * 21, 1, 3)
    with pytest.raises(OracleRefused):
        optimal_exact(inst)
    with pytest.raises(OracleRefused):
        optimal_value_rational(inst)


def test_ties_break_to_lowest_index():
    inst = Instance((2.0, 2.0, 2.0), (0.5, 0.5, 0.5), 1, 1)
    _, tree = optimal_exact(inst)
    assert tree.nodes[tree.root].app == 0


def test_value_order():
    inst = Instance((1.0, 3.0, 3.0, 2.0), (1.0,) * 4, 1, 1)
    assert value_order(inst) == [1, 2, 3, 0]


@given(instances(n_max=7, T_max=7))
def test_greedy_is_a_half_approximation(inst):
    opt = optimal_value(inst)
    g, tree = greedy_dp(inst)
    assert g == greedy_value(inst)
    assert 0.5 * opt - 1e-12 <= g <= opt + 1e-12
    assert validate_tree(tree, inst, exact_states=True) is None
    assert tree_reward(tree, inst) >= g - 1e-12 * max(1.0, g)


def test_rational_matches_float_closely():
    rng = random.Random(4)
    for _ in range(20):
        inst = random_instance(rng, n_max=7, T_max=7)
        q = optimal_value_rational(inst)
        assert isinstance(q, Fraction)
        assert float(q) == pytest.approx(optimal_value(inst), rel=1e-12)


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
def test_backends_agree_bitwise():
    rng = random.Random(11)
    py, cy = get_backend("python"), get_backend("cython")
    for _ in range(25):
        inst = random_instance(rng, n_max=9, T_max=9, k_max=4)
        args = (list(inst.values), list(inst.probs), inst.k, inst.T)
        Vp, Cp = py.exact_table(*args)
        Vc, Cc = cy.exact_table(*args)
        assert np.array_equal(Vp, Vc)
        assert np.array_equal(Cp, Cc)


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")
