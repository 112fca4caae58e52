"""Block-responsive decision trees and the terminal-based compression of a
standard tree into one."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .core import (
    VIRTUAL,
    DecisionTree,
    Instance,
    State,
    Violation,
    mask_of,
    popcount,
    subtree_rewards,
)
from .rounding import ClassPartition


@dataclass(frozen=True, slots=True)
class BlockNode:
    state: State
    block: tuple[int, ...] = ()
    left: int | None = None
    right: int | None = None
    coin: float | None = None  # Pr[descend left | all reject]; None means 1

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class BlockTree:
    def __init__(self, nodes: list[BlockNode] | None = None, root: int = 0):
        self.nodes: list[BlockNode] = [] if nodes is None else nodes
        self.root = root

    def add(self, state: State, block=(), left=None, right=None, coin=None) -> int:
        self.nodes.append(BlockNode(state, tuple(block), left, right, coin))
        return len(self.nodes) - 1

    def add_leaf(self, state: State) -> int:
        return self.add(state)

    def __getitem__(self, u: int) -> BlockNode:
        return self.nodes[u]

    def __len__(self) -> int:
        return len(self.nodes)

    def reachable(self, root: int | None = None) -> list[int]:
        root = self.root if root is None else root
        seen: set[int] = set()
        order: list[int] = []
        stack = [root]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            order.append(u)
            nd = self.nodes[u]
            if not nd.is_leaf:
                stack.append(nd.right)
                stack.append(nd.left)
        return order

    def postorder(self, root: int | None = None) -> list[int]:
        """Distinct reachable node ids, every node after both of its children."""
        root = self.root if root is None else root
        done: set[int] = set()
        order: list[int] = []
        stack = [(root, False)]
        while stack:
            u, expanded = stack.pop()
            if u in done:
                continue
            nd = self.nodes[u]
            if expanded or nd.is_leaf:
                done.add(u)
                order.append(u)
                continue
            stack.append((u, True))
            stack.append((nd.right, False))
            stack.append((nd.left, False))
        return order

    def compact(self) -> BlockTree:
        order = self.reachable()
        ids = {u: i for i, u in enumerate(order)}
        out = []
        for u in order:
            nd = self.nodes[u]
            if nd.is_leaf:
                out.append(BlockNode(nd.state, ()))
            else:
                out.append(BlockNode(nd.state, nd.block, ids[nd.left], ids[nd.right], nd.coin))
        return BlockTree(out, 0)

    def signature(self) -> tuple:
        return tuple(
            (nd.state, nd.block, nd.left, nd.right, nd.coin) for nd in self.compact().nodes
        )

    def has_coins(self) -> bool:
        return any(self.nodes[u].coin is not None for u in self.reachable())

    def strip_coins(self) -> BlockTree:
        return BlockTree([BlockNode(nd.state, nd.block, nd.left, nd.right) for nd in self.nodes], self.root)

    def depth(self) -> int:
        memo: dict[int, int] = {}
        for u in self.postorder():
            nd = self.nodes[u]
            memo[u] = 0 if nd.is_leaf else 1 + max(memo[nd.left], memo[nd.right])
        return memo[self.root]

    def to_json_obj(self) -> list[dict]:
        return [
            {
                "state": nd.state.to_json(),
                "block": list(nd.block),
                "coin": nd.coin,
                "left": nd.left,
                "right": nd.right,
            }
            for nd in self.compact().nodes
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> BlockTree:
        return cls.from_json_obj(json.loads(text))

    @classmethod
    def from_json_obj(cls, data: list[dict]) -> BlockTree:
        return cls(
            [
                BlockNode(State.from_json(d["state"]), tuple(d["block"]), d["left"], d["right"], d.get("coin"))
                for d in data
            ]
        )


def leaf_block_tree(state: State) -> BlockTree:
    bt = BlockTree()
    bt.add_leaf(state)
    return bt


# --- rewards -----------------------------------------------------------------


def rejection_probability(block, inst: Instance) -> float:
    out = 1.0
    for a in block:
        out *= 1.0 - inst.probs[a]
    return out


def _rank_reward(nd: BlockNode, inst: Instance, rl: float, rr: float, r: int) -> float:
    if nd.coin is None:
        tail = rl
    else:
        tail = nd.coin * rl + (1.0 - nd.coin) * rr
    vals, probs = inst.values, inst.probs
    for a in reversed(nd.block[r - 1:]):
        p = probs[a]
        tail = p * (vals[a] + rr) + (1.0 - p) * tail
    return tail


def block_subtree_rewards(btree: BlockTree, inst: Instance, root: int | None = None) -> dict[int, float]:
    out: dict[int, float] = {}
    for u in btree.postorder(root):
        nd = btree.nodes[u]
        out[u] = 0.0 if nd.is_leaf else _rank_reward(nd, inst, out[nd.left], out[nd.right], 1)
    return out


def block_tree_reward(btree: BlockTree, inst: Instance, node: int | None = None, from_rank: int = 1) -> float:
    """Expected reward of T(u) starting at rank r of block(u); r=1 is the node reward."""
    node = btree.root if node is None else node
    if not 0 <= node < len(btree.nodes):
        raise KeyError(f"unknown node id {node}")
    nd = btree.nodes[node]
    if not 1 <= from_rank <= len(nd.block) + 1:
        raise ValueError(f"rank {from_rank} outside 1..{len(nd.block) + 1}")
    if nd.is_leaf:
        return 0.0
    R = block_subtree_rewards(btree, inst, node)
    return _rank_reward(nd, inst, R[nd.left], R[nd.right], from_rank)


def rank_rewards(btree: BlockTree, inst: Instance, u: int, R: dict[int, float]) -> list[float]:
    """[R(u,1), ..., R(u,|B|+1)] given subtree rewards R."""
    nd = btree.nodes[u]
    return [_rank_reward(nd, inst, R[nd.left], R[nd.right], r) for r in range(1, len(nd.block) + 2)]


# --- validity ----------------------------------------------------------------


def validate_block_tree(btree: BlockTree, inst: Instance, *, exact_states: bool = False) -> Violation | None:
    n, T, k = inst.n, inst.T, inst.k
    nodes = btree.nodes
    for u in btree.reachable():
        nd = nodes[u]
        st = nd.state
        if nd.is_leaf:
            if nd.block:
                return Violation("leaf", f"leaf {u} carries a non-empty block", (u,))
            continue
        if not nd.block:
            return Violation("block", f"internal node {u} has an empty block", (u,))
        if nd.coin is not None and not 0.0 <= nd.coin <= 1.0:
            return Violation("coin", f"coin {nd.coin} at node {u} is not a probability", (u,))
        B = mask_of(nd.block)
        if popcount(B) != len(nd.block) or any(not 0 <= a < n for a in nd.block):
            return Violation("block", f"block at node {u} repeats or names unknown applicants", (u,))
        if B & ~st.avail:
            return Violation("block", f"block at node {u} offers unavailable applicants", (u,))
        rest = st.avail & ~B
        t2 = st.t + len(nd.block)
        for child, kk in ((nd.left, st.k), (nd.right, st.k - 1)):
            cs = nodes[child].state
            if exact_states:
                ok = cs == (t2, kk, rest)
            else:
                ok = cs.t >= t2 and cs.k <= kk and cs.avail & ~rest == 0
            if not ok:
                return Violation("child", f"child {child} of {u} has state {cs}", (u, child))

    seen = set()
    stack = [(btree.root, 0, 0, 0, ())]
    while stack:
        u, stages, rights, offered, path = stack.pop()
        key = (u, stages, rights, offered)
        if key in seen:
            continue
        seen.add(key)
        path = path + (u,)
        nd = nodes[u]
        if nd.is_leaf:
            continue
        B = mask_of(nd.block)
        if stages + len(nd.block) > T:
            return Violation("1", f"more than T={T} offers on a path", path)
        if offered & B:
            return Violation("3", "applicant repeated on a path", path)
        stack.append((nd.left, stages + len(nd.block), rights, offered | B, path))
        if rights + 1 > k:
            return Violation("2", f"more than k={k} right turns", path + (nd.right,))
        stack.append((nd.right, stages + len(nd.block), rights + 1, offered | B, path))
    return None


# --- conversion to a standard tree -------------------------------------------


class CoinError(ValueError):
    pass


def block_tree_to_std(btree: BlockTree, inst: Instance) -> DecisionTree:
    """Unroll each block into a chain of single offers sharing one right subtree."""
    if btree.has_coins():
        raise CoinError("correction coins cannot be expressed as a standard tree")
    std = DecisionTree()
    conv: dict[int, int] = {}
    for u in btree.postorder():
        nd = btree.nodes[u]
        if nd.is_leaf:
            conv[u] = std.add_leaf(nd.state)
            continue
        t, kk, avail = nd.state
        nxt = conv[nd.left]
        right = conv[nd.right]
        # build bottom-up: the last applicant's rejection leads to L
        prefix_masks = [avail]
        for a in nd.block[:-1]:
            prefix_masks.append(prefix_masks[-1] & ~(1 << a))
        for j in range(len(nd.block) - 1, -1, -1):
            nxt = std.add(State(t + j, kk, prefix_masks[j]), nd.block[j], nxt, right)
        conv[u] = nxt
    std.root = conv[btree.root]
    return std


# --- terminals -----------------------------------------------------------------


class TerminalInputError(ValueError):
    """The standard tree violates a precondition of the terminal rules."""


def terminal_bound(eps: float) -> float:
    return 13.0 / eps**3 * math.log(1.0 / eps)


class _Powers:
    """Integer powers q**j, j >= 1, by repeated multiplication."""

    def __init__(self, q: float):
        self.q = q
        self.vals = [q]

    def crosses(self, lo: float, hi: float) -> bool:
        """Does [lo, hi] contain some q**j with j >= 1?"""
        if hi <= 0.0:
            return False
        if lo <= 0.0:
            return True
        if self.q <= 0.0:
            return False
        vals = self.vals
        j = 0
        while True:
            if j == len(vals):
                vals.append(vals[-1] * self.q)
                if vals[-1] == 0.0:
                    return False
            x = vals[j]
            if x <= hi:
                return x >= lo
            j += 1


@dataclass
class TerminalSet:
    path: list[int]  # std node ids u_1..u_S
    arrival: list[float]  # arrival probabilities from u_1
    ratios: list[float]  # R(u_s R) / R(u_1), s < S
    terminals: list[int]  # 1-based path indices tau_1 < ... < tau_F
    types: dict[int, str]
    F_B: int  # position (1-based) in terminals of the last type-B terminal

    @property
    def F(self) -> int:
        return len(self.terminals)


def leftmost_path(tree: DecisionTree, root: int) -> list[int]:
    path = [root]
    while not tree.nodes[path[-1]].is_leaf:
        path.append(tree.nodes[path[-1]].left)
    return path


def find_terminals(tree: DecisionTree, inst: Instance, eps: float, root: int | None = None, *,
                   R: dict[int, float] | None = None, check_monotone: bool = True,
                   rel_tol: float = 1e-9) -> TerminalSet:
    root = tree.root if root is None else root
    R = subtree_rewards(tree, inst, root) if R is None else R
    path = leftmost_path(tree, root)
    S = len(path)
    probs = inst.probs
    e3 = eps**3
    pw = _Powers(1.0 - e3)

    arrival = [1.0]
    for s in range(S - 1):
        arrival.append(arrival[-1] * (1.0 - probs[tree.nodes[path[s]].app]))
    rights = [R[tree.nodes[path[s]].right] for s in range(S - 1)]
    if check_monotone:
        for s in range(len(rights) - 1):
            if rights[s + 1] > rights[s] + rel_tol * max(1.0, rights[s]):
                raise TerminalInputError(
                    f"right-subtree rewards increase along the leftmost path at position {s + 2}"
                )
    total = R[root]
    ratios = [x / total for x in rights] if total > 0.0 else [0.0] * len(rights)

    # type A, indices are 1-based
    type_a = {1}
    last = S
    for s in range(1, S + 1):
        if arrival[s - 1] < e3 or s == S:
            last = s
            break
        if pw.crosses(arrival[s], arrival[s - 1]):
            type_a.update((s, s + 1))
    type_a = {s for s in type_a if s <= last} | {last}
    # type B, up to the last type-A terminal
    type_b: set[int] = set()
    last_b = last
    for s in range(1, last + 1):
        if s == last:
            last_b = s
            break
        if ratios[s - 1] < e3:
            last_b = s
            break
        if s + 1 <= S - 1 and pw.crosses(ratios[s], ratios[s - 1]):
            type_b.update((s, s + 1))
    type_b.add(last_b)
    type_b = {s for s in type_b if s <= last}

    terms = sorted(type_a | type_b)
    tags = {s: ("A" if s in type_a else "") + ("B" if s in type_b else "") for s in terms}
    F_B = terms.index(last_b) + 1
    return TerminalSet(path, arrival, ratios, terms, tags, F_B)


# --- Theorem 4.1 style construction -------------------------------------------


class BlockBuildError(ValueError):
    pass


@dataclass
class BlockBuildReport:
    F_values: list[int] = field(default_factory=list)
    F_B_values: list[int] = field(default_factory=list)
    depth: int = 0

    @property
    def max_F(self) -> int:
        return max(self.F_values, default=1)


def value_sorted(block, inst: Instance) -> tuple[int, ...]:
    return tuple(sorted(block, key=lambda a: (-inst.values[a], a)))


def build_block_tree(std: DecisionTree, inst: Instance, eps: float, partition: ClassPartition | None = None,
                     *, check_premises: bool = True, check_monotone: bool = True,
                     ) -> tuple[BlockTree, BlockBuildReport]:
    """Group the leftmost path between successive terminals into blocks, recursing
    into right subtrees up to the last type-B terminal."""
    from .canonical import check_canonical
    from .qptas import check_order_by_value

    if check_premises:
        bad = check_canonical(std, inst)
        if bad is not None:
            raise BlockBuildError(f"input tree is not canonical: {bad}")
        if partition is not None:
            w = check_order_by_value(std, partition)
            if w is not None:
                raise BlockBuildError(f"input tree is not order-by-value at node {w}")
    R = subtree_rewards(std, inst)
    report = BlockBuildReport()
    bt = BlockTree()
    nodes = std.nodes

    def convert(u: int) -> int:
        nd = nodes[u]
        if nd.is_leaf or R[u] <= 0.0:
            return bt.add_leaf(nd.state)
        ts = find_terminals(std, inst, eps, u, R=R, check_monotone=check_monotone)
        if ts.F > terminal_bound(eps) + 2:
            raise AssertionError(f"{ts.F} terminals exceed the bound for eps={eps}")
        report.F_values.append(ts.F)
        report.F_B_values.append(ts.F_B)
        path, tau = ts.path, ts.terminals
        F = ts.F
        # left spine: blocks f = 1..F-1, then a leaf at u_{tau_F}
        spine: list[tuple[State, tuple[int, ...], int]] = []
        for f in range(1, F):
            a, b = tau[f - 1], tau[f]
            seg = [nodes[path[s - 1]].app for s in range(a, b)]
            spine.append((nodes[path[a - 1]].state, value_sorted(seg, inst), path[b - 2]))
        nxt = bt.add_leaf(nodes[path[tau[-1] - 1]].state)
        for f in range(F - 1, 0, -1):
            st, block, last_node = spine[f - 1]
            if f <= ts.F_B - 1:
                right = convert(nodes[last_node].right)
            else:
                right = bt.add_leaf(State(st.t + len(block), st.k - 1, st.avail & ~mask_of(block)))
            nxt = bt.add(st, block, nxt, right)
        return nxt

    bt.root = convert(std.root)
    bt = bt.compact()
    report.depth = bt.depth()
    if report.depth > inst.k * report.max_F:
        raise AssertionError(f"block tree depth {report.depth} exceeds k*F = {inst.k * report.max_F}")
    return bt, report


def check_block_order_by_value(btree: BlockTree, partition: ClassPartition) -> int | None:
    """First node whose class members are not the top available prefix of their class."""
    full = (1 << len(partition.class_of)) - 1
    seen = set()
    stack = [(btree.root, full)]
    while stack:
        u, avail = stack.pop()
        if (u, avail) in seen:
            continue
        seen.add((u, avail))
        nd = btree.nodes[u]
        if nd.is_leaf:
            continue
        B = mask_of(nd.block)
        for m in {partition.class_of[a] for a in nd.block}:
            cnt = sum(1 for a in nd.block if partition.class_of[a] == m)
            top = [a for a in partition.classes[m] if avail >> a & 1][:cnt]
            if mask_of(top) != B & mask_of(partition.classes[m]):
                return u
        rest = avail & ~B
        stack.append((nd.left, rest))
        stack.append((nd.right, rest))
    return None


__all__ = [
    "VIRTUAL",
    "BlockNode",
    "BlockTree",
    "block_tree_reward",
    "block_tree_to_std",
    "build_block_tree",
    "check_block_order_by_value",
    "find_terminals",
    "rejection_probability",
    "validate_block_tree",
]
