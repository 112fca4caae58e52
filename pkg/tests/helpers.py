"""Instance and tree generators shared by the test modules."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from hiring.blockpolicy import BlockTree
from hiring.core import DecisionTree, Instance, State, policy_tree_from_function


def random_instance(rng: random.Random, n_max: int = 6, T_max: int = 6, k_max: int = 3, *, n_min: int = 1) -> Instance:
    n = rng.randint(n_min, n_max)
    T = rng.randint(1, T_max)
    k = rng.randint(1, min(k_max, n))
    values = [round(rng.uniform(0.0, 10.0), 3) for _ in range(n)]
    probs = [round(rng.uniform(0.02, 1.0), 3) for _ in range(n)]
    return Instance(values, probs, k, T)


@st.composite
def instances(draw, n_max: int = 6, T_max: int = 6, k_max: int = 3, n_min: int = 1) -> Instance:
    n = draw(st.integers(n_min, n_max))
    T = draw(st.integers(1, T_max))
    k = draw(st.integers(1, min(k_max, n)))
    values = draw(st.lists(st.integers(0, 1000).map(lambda x: x / 100), min_size=n, max_size=n))
    probs = draw(st.lists(st.integers(0, 100).map(lambda x: x / 100), min_size=n, max_size=n))
    return Instance(values, probs, k, T)


def random_tree(inst: Instance, rng: random.Random) -> DecisionTree:
    """A random valid policy tree (one random choice per state)."""

    def policy(s: State) -> int:
        return rng.choice([a for a in range(inst.n) if s.avail >> a & 1])

    return policy_tree_from_function(inst, policy)


def random_block_tree(inst: Instance, rng: random.Random, *, coins: bool = False) -> BlockTree:
    """A random valid block tree with exact child labels."""
    bt = BlockTree()

    def build(t: int, kk: int, avail: int) -> int:
        s = State(t, kk, avail)
        if s.is_terminal(inst.T):
            return bt.add_leaf(s)
        free = [a for a in range(inst.n) if avail >> a & 1]
        size = rng.randint(1, min(len(free), inst.T - t + 1, 3))
        block = rng.sample(free, size)
        rest = avail
        for a in block:
            rest &= ~(1 << a)
        left = build(t + size, kk, rest)
        right = build(t + size, kk - 1, rest)
        coin = rng.random() if coins and rng.random() < 0.5 else None
        return bt.add(s, block, left, right, coin)

    bt.root = build(1, inst.k, inst.full_mask)
    return bt
