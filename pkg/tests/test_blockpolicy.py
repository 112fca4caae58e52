from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import instances, random_block_tree, random_instance
from hiring.blockpolicy import (
    BlockBuildError,
    BlockTree,
    CoinError,
    block_tree_reward,
    block_tree_to_std,
    build_block_tree,
    check_block_order_by_value,
    find_terminals,
    rank_rewards,
    rejection_probability,
    terminal_bound,
    validate_block_tree,
)
from hiring.canonical import check_block_canonical, canonicalize_block
from hiring.core import DecisionTree, Instance, State, three_applicant_example, tree_reward, validate_tree
from hiring.qptas import qptas
from hiring.rounding import round_instance
from hiring.simulate import simulate


def _two_block_example():
    inst = Instance((2.0, 2.0), (0.5, 0.5), 1, 2)
    bt = BlockTree()
    left = bt.add_leaf(State(3, 1, 0))
    right = bt.add_leaf(State(3, 0, 0))
    bt.root = bt.add(State(1, 1, 0b11), (0, 1), left, right)
    return inst, bt


def test_hand_expanded_block_reward():
    inst, bt = _two_block_example()
    assert block_tree_reward(bt, inst) == 1.5
    assert block_tree_reward(bt, inst, from_rank=2) == 1.0
    assert block_tree_reward(bt, inst, from_rank=3) == 0.0
    R = {0: 0.0, 1: 0.0}
    assert rank_rewards(bt, inst, bt.root, R) == [1.5, 1.0, 0.0]
    with pytest.raises(ValueError):
        block_tree_reward(bt, inst, from_rank=4)
    with pytest.raises(KeyError):
        block_tree_reward(bt, inst, node=17)
    rep = simulate(bt, inst, 40_000, seed=1)
    assert abs(rep.mean_reward - 1.5) <= 4 * rep.std_error


@pytest.mark.parametrize("block, expected", [((0, 1), 0.25), ((), 1.0), ((0,), 0.5)])
def test_rejection_probability(block, expected):
    inst, _ = _two_block_example()
    assert rejection_probability(block, inst) == expected


def test_two_applicant_block_unrolls_to_gadget():
    inst, bt = _two_block_example()
    std = block_tree_to_std(bt, inst)
    internal = [u for u in std.reachable() if not std.nodes[u].is_leaf]
    assert len(internal) == 2
    assert len(std.reachable()) == 4  # the two offers share one acceptance leaf
    assert tree_reward(std, inst) == block_tree_reward(bt, inst)
    assert validate_tree(std, inst, check_consistency=False) is None


def test_single_applicant_blocks_match_standard_trees():
    inst, tree = three_applicant_example()
    bt = BlockTree()
    ids = {}
    for u in tree.postorder():
        nd = tree.nodes[u]
        ids[u] = bt.add_leaf(nd.state) if nd.is_leaf else bt.add(nd.state, (nd.app,), ids[nd.left], ids[nd.right])
    bt.root = ids[tree.root]
    assert block_tree_reward(bt, inst) == tree_reward(tree, inst) == 3.0
    back = block_tree_to_std(bt, inst)
    assert back.signature() == tree.signature()


@given(instances(n_max=6, T_max=6), st.integers(0, 2**31))
def test_evaluators_agree(inst, seed):
    bt = random_block_tree(inst, random.Random(seed))
    assert validate_block_tree(bt, inst, exact_states=True) is None
    a = block_tree_reward(bt, inst)
    b = tree_reward(block_tree_to_std(bt, inst), inst)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_coins_block_unrolling():
    inst, bt = _two_block_example()
    coined = BlockTree([nd for nd in bt.nodes], bt.root)
    nd = coined.nodes[coined.root]
    coined.nodes[coined.root] = type(nd)(nd.state, nd.block, nd.left, nd.right, 0.5)
    with pytest.raises(CoinError):
        block_tree_to_std(coined, inst)


def test_coin_semantics():
    # all reject with prob 1/4; the coin then sends us right half the time
    inst = Instance((2.0, 2.0, 8.0), (0.5, 0.5, 1.0), 2, 3)
    bt = BlockTree()
    left = bt.add(State(3, 2, 0b100), (2,), bt.add_leaf(State(4, 2, 0)), bt.add_leaf(State(4, 1, 0)))
    right = bt.add(State(3, 1, 0b100), (2,), bt.add_leaf(State(4, 1, 0)), bt.add_leaf(State(4, 0, 0)))
    bt.root = bt.add(State(1, 2, 0b111), (0, 1), left, right, 0.5)
    # 0.5*(2+8) + 0.25*(2+8) + 0.25*8 = 9.5 regardless of the coin, since L = R = 8
    assert block_tree_reward(bt, inst) == 9.5
    assert validate_block_tree(bt, inst, exact_states=True) is None


def test_json_round_trip():
    inst = Instance((1.0, 2.0, 3.0, 0.5), (0.3, 0.6, 0.2, 0.9), 2, 4)
    bt = random_block_tree(inst, random.Random(3), coins=True)
    back = BlockTree.from_json(bt.to_json())
    assert back.signature() == bt.signature()
    assert block_tree_reward(back, inst) == block_tree_reward(bt, inst)


@pytest.mark.parametrize(
    "mutate, prop",
    [
        (lambda nd: (nd.state, nd.block + nd.block[:1], nd.left, nd.right, nd.coin), "block"),
        (lambda nd: (nd.state, nd.block, nd.left, nd.right, 1.5), "coin"),
        (lambda nd: (nd.state, (), nd.left, nd.right, nd.coin), "block"),
    ],
)
def test_validator_catches_broken_block_trees(mutate, prop):
    inst, bt = _two_block_example()
    nd = bt.nodes[bt.root]
    bt.nodes[bt.root] = type(nd)(*mutate(nd))
    bad = validate_block_tree(bt, inst)
    assert bad is not None and bad.prop == prop


def test_terminals_trivial_path():
    inst = Instance((1.0,), (0.5,), 1, 1)
    tree = DecisionTree()
    tree.root = tree.add_leaf(inst.root_state())
    ts = find_terminals(tree, inst, 0.6)
    assert ts.F == 1 and ts.terminals == [1]


def test_terminals_with_zero_probabilities():
    inst = Instance((1.0, 2.0, 3.0), (0.0, 0.0, 0.0), 1, 3)
    _, tree, _ = qptas(inst, 0.5)
    ts = find_terminals(tree, inst, 0.5)
    assert ts.arrival == [1.0] * len(ts.path)
    assert ts.terminals[0] == 1
    assert ts.terminals[-1] == len(ts.path)


def _pipeline(inst, eps):
    ri = round_instance(inst, eps)
    value, tree, _ = qptas(inst, eps)
    bt, rep = build_block_tree(tree, ri.mixed, eps, ri.partition)
    return ri, value, tree, bt, rep


@pytest.mark.parametrize("eps", [0.5, 0.6, 0.7])
def test_block_construction_properties(eps):
    rng = random.Random(int(eps * 100))
    for _ in range(25):
        inst = random_instance(rng, n_max=9, T_max=7, k_max=2)
        ri, value, tree, bt, rep = _pipeline(inst, eps)
        assert validate_block_tree(bt, ri.mixed, exact_states=True) is None
        assert check_block_order_by_value(bt, ri.partition) is None
        assert all(F <= terminal_bound(eps) + 2 for F in rep.F_values)
        assert bt.depth() <= inst.k * rep.max_F
        for u in bt.reachable():
            block = bt.nodes[u].block
            if len(block) > 1:
                assert rejection_probability(block, ri.mixed) >= 1.0 - eps**3 - 1e-12
            vals = [ri.mixed.values[a] for a in block]
            assert vals == sorted(vals, reverse=True)
        b_val = block_tree_reward(bt, ri.mixed)
        assert b_val >= (1.0 - 4.0 * eps**3 * inst.k) * value - 1e-9
        assert b_val == pytest.approx(tree_reward(block_tree_to_std(bt, ri.mixed), ri.mixed), rel=1e-12, abs=1e-15)
        canon, _ = canonicalize_block(bt, ri.mixed)
        assert check_block_canonical(canon, ri.mixed) is None
        assert block_tree_reward(canon, inst) >= block_tree_reward(canon, ri.mixed) - 1e-9


def test_k1_depth_bound():
    rng = random.Random(9)
    for _ in range(20):
        inst = random_instance(rng, n_max=8, T_max=6, k_max=1)
        _, _, _, bt, rep = _pipeline(inst, 0.6)
        assert bt.depth() <= rep.max_F + 1


def test_pure_left_chain():
    # nobody ever accepts, so every right subtree has zero reward
    inst = Instance((1.0, 2.0, 3.0), (0.0, 0.0, 0.0), 1, 3)
    ri, _, tree, bt, _ = _pipeline(inst, 0.5)
    assert bt.nodes[bt.root].is_leaf  # zero optimum short-circuits to a leaf


def test_refuses_non_canonical_input():
    inst, tree = three_applicant_example()
    with pytest.raises(BlockBuildError):
        build_block_tree(tree, inst, 0.5)


def test_order_by_value_witness():
    inst = Instance((3.0, 1.0), (0.5, 0.5), 1, 2)
    ri = round_instance(inst, 0.5)
    assert ri.partition.class_of[0] == ri.partition.class_of[1]
    bt = BlockTree()
    left = bt.add_leaf(State(2, 1, 0b01))
    right = bt.add_leaf(State(2, 0, 0b01))
    bt.root = bt.add(State(1, 1, 0b11), (1,), left, right)  # skips the best member
    assert check_block_order_by_value(bt, ri.partition) == bt.root
    assert check_block_order_by_value(BlockTree([bt.nodes[left]], 0), ri.partition) is None


def test_terminal_count_within_bound():
    rng = random.Random(21)
    eps = 0.6
    for _ in range(30):
        inst = random_instance(rng, n_max=10, T_max=8, k_max=2)
        ri = round_instance(inst, eps)
        _, tree, _ = qptas(inst, eps)
        ts = find_terminals(tree, ri.mixed, eps)
        assert ts.F <= terminal_bound(eps) + 2
        assert ts.terminals[0] == 1
        assert all(a >= b for a, b in zip(ts.arrival, ts.arrival[1:]))
        assert math.isfinite(sum(ts.ratios))
