from __future__ import annotations

import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import instances, random_tree
from hiring.canonical import canonicalize
from hiring.core import Flavor, Instance, tree_reward
from hiring.qptas import qptas
from hiring.rounding import RoundingError, class_bounds, class_index, partition_classes, round_instance

eps_values = st.sampled_from([0.1, 0.25, 0.3, 0.5, 0.7])


def test_partition_example():
    inst = Instance((1.0, 2.0, 3.0), (0.001, 0.02, 0.9), 1, 10)
    part = partition_classes(inst, 0.1)
    assert part.gamma == pytest.approx(0.01)
    assert part.classes[0] == (0,)
    for i in (1, 2):
        m = part.class_of[i]
        assert part.bounds[m - 1] < inst.probs[i] <= part.bounds[m]
    # by hand: 0.02 = 0.01 * 2, and 1.1**7 < 2 < 1.1**8
    assert part.class_of[1] == 8


def test_everything_in_class_zero():
    inst = Instance((1.0, 2.0), (0.01, 0.05), 1, 10)
    part = partition_classes(inst, 0.5)
    assert part.classes[0] == (1, 0)  # ordered by p*v/gamma, not by v
    assert all(not c for c in part.classes[1:])


def test_boundary_goes_to_lower_class():
    bounds = class_bounds(0.1, 0.5)
    assert class_index(0.1, bounds) == 0
    assert class_index(bounds[2], bounds) == 2
    assert class_index(math.nextafter(bounds[2], 1.0), bounds) == 3
    assert class_index(1.0, bounds) == len(bounds) - 1


def test_epsilon_too_large():
    inst = Instance((1.0,), (0.5,), 1, 1)
    with pytest.raises(RoundingError, match="epsilon too large for horizon"):
        partition_classes(inst, 1.0)
    with pytest.raises(RoundingError):
        partition_classes(inst, 0.0)


@pytest.mark.parametrize(
    "p, v, gamma_T, up",
    [
        (0.001, 10.0, 1, (0.1, 0.1)),
        (0.0, 7.0, 1, (0.1, 0.0)),
        (0.5, 3.0, 1, (0.5, 3.0)),
    ],
)
def test_round_up_examples(p, v, gamma_T, up):
    inst = Instance((v,), (p,), 1, gamma_T)
    ri = round_instance(inst, 0.1)
    assert ri.up.probs[0] == up[0]
    assert ri.up.values[0] == pytest.approx(up[1], rel=1e-15)
    assert ri.up.flavor == Flavor.ROUNDED_UP
    assert ri.mixed.flavor == Flavor.MIXED_ROUNDED


@given(instances(n_max=10, T_max=10), eps_values)
def test_rounding_invariants(inst, eps):
    try:
        ri = round_instance(inst, eps)
    except RoundingError:
        assert eps / inst.T >= 1.0
        return
    part = ri.partition
    assert sorted(a for c in part.classes for a in c) == list(range(inst.n))
    assert part.M <= math.ceil(math.log(1.0 / part.gamma) / math.log(1.0 + eps)) + 1
    for m, cls in enumerate(part.classes):
        keys = [ri.mixed.values[a] for a in cls]
        assert keys == sorted(keys, reverse=True)
        for a in cls:
            p = inst.probs[a]
            if m == 0:
                assert p <= part.gamma
                assert ri.mixed.probs[a] == part.gamma
            else:
                assert part.bounds[m - 1] < p <= part.bounds[m]
                assert ri.mixed.probs[a] <= p <= (1.0 + eps) * ri.mixed.probs[a]
                assert ri.up.values[a] == inst.values[a]
            # products survive up to one rounding of the division
            assert ri.up.probs[a] * ri.up.values[a] == pytest.approx(ri.r[a], rel=4e-16, abs=0.0)
    assert len(set(ri.mixed.probs)) <= part.M + 1
    assert ri.mixed.values == ri.up.values


def test_rounded_json_has_three_instances():
    inst = Instance((1.0, 2.0), (0.01, 0.7), 1, 3)
    d = json.loads(round_instance(inst, 0.3).to_json())
    assert set(d) == {"base", "up", "mixed", "partition"}
    assert Instance.from_dict(d["mixed"]).flavor == Flavor.MIXED_ROUNDED


@given(instances(n_max=8, T_max=6), st.sampled_from([0.3, 0.5]), st.integers(0, 2**31))
def test_round_down_loss_on_canonical_trees(inst, eps, seed):
    ri = round_instance(inst, eps)
    tree, _ = canonicalize(random_tree(inst, random.Random(seed)), inst)
    lhs = tree_reward(tree, ri.mixed)
    rhs = (1.0 - 2.0 * eps) * tree_reward(tree, inst)
    assert lhs >= rhs - 1e-9 * max(1.0, abs(rhs))


@given(instances(n_max=8, T_max=6), st.sampled_from([0.3, 0.5]))
def test_round_up_gain_on_mixed_canonical_trees(inst, eps):
    _, tree, ri = qptas(inst, eps)
    lhs, rhs = tree_reward(tree, inst), tree_reward(tree, ri.mixed)
    assert lhs >= rhs - 1e-9 * max(1.0, rhs)
