"""Instances, states, standard decision trees and their analytic rewards."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

VIRTUAL = -1


class Flavor(str, enum.Enum):
    ORIGINAL = "original"
    ROUNDED_UP = "rounded_up"
    MIXED_ROUNDED = "mixed_rounded"


@dataclass(frozen=True)
class Instance:
    values: tuple[float, ...]
    probs: tuple[float, ...]
    k: int
    T: int
    flavor: Flavor = Flavor.ORIGINAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "flavor", Flavor(self.flavor))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def root_state(self) -> State:
        return State(1, self.k, self.full_mask)

    def with_params(self, values=None, probs=None, flavor=None) -> Instance:
        return Instance(
            self.values if values is None else values,
            self.probs if probs is None else probs,
            self.k,
            self.T,
            self.flavor if flavor is None else flavor,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "values": list(self.values),
            "probs": list(self.probs),
            "k": self.k,
            "T": self.T,
            "flavor": self.flavor.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> Instance:
        inst = cls(d["values"], d["probs"], int(d["k"]), int(d["T"]), d.get("flavor", "original"))
        if "n" in d and int(d["n"]) != inst.n:
            raise ValueError(f"n={d['n']} does not match {inst.n} values")
        bad = validate_instance(inst)
        if bad is not None:
            raise ValueError(bad.message)
        return inst

    @classmethod
    def from_json(cls, text: str) -> Instance:
        return cls.from_dict(json.loads(text))


class State(tuple):
    """(t, k_t, avail) with avail an applicant bitmask."""

    __slots__ = ()

    def __new__(cls, t: int, k: int, avail: int):
        return tuple.__new__(cls, (t, k, avail))

    @property
    def t(self) -> int:
        return self[0]

    @property
    def k(self) -> int:
        return self[1]

    @property
    def avail(self) -> int:
        return self[2]

    def is_terminal(self, T: int) -> bool:
        return self[0] == T + 1 or self[1] == 0 or self[2] == 0

    def to_json(self) -> list:
        return [self[0], self[1], hex(self[2])]

    @classmethod
    def from_json(cls, data: Sequence) -> State:
        return cls(int(data[0]), int(data[1]), int(data[2], 16))

    def __repr__(self) -> str:
        return f"State(t={self[0]}, k={self[1]}, avail={self[2]:#x})"


def popcount(x: int) -> int:
    return bin(x).count("1")


def mask_of(ids) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def members(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class Violation:
    prop: str
    message: str
    witness: tuple = ()

    def __str__(self) -> str:
        return f"[{self.prop}] {self.message}"


def validate_instance(inst: Instance) -> Violation | None:
    if inst.n < 1:
        return Violation("size", "instance needs at least one applicant")
    if len(inst.probs) != inst.n:
        return Violation("size", "values and probs differ in length")
    for i, v in enumerate(inst.values):
        if not v >= 0.0 or v == float("inf"):
            return Violation("value", f"negative value at applicant {i}", (i,))
    for i, p in enumerate(inst.probs):
        if not 0.0 <= p <= 1.0:
            return Violation("prob", f"prob out of range at applicant {i}", (i,))
    if inst.k < 1:
        return Violation("k", "k must be at least 1")
    if inst.k > inst.n:
        return Violation("k", "k exceeds the number of applicants")
    if inst.T < 1:
        return Violation("T", "T must be at least 1")
    return None


@dataclass(frozen=True, slots=True)
class TreeNode:
    state: State
    app: int
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class DecisionTree:
    """Arena of nodes. Subtrees may be shared; every routine reads it as a tree."""

    def __init__(self, nodes: list[TreeNode] | None = None, root: int = 0):
        self.nodes: list[TreeNode] = [] if nodes is None else nodes
        self.root = root

    def add(self, state: State, app: int = VIRTUAL, left: int | None = None, right: int | None = None) -> int:
        self.nodes.append(TreeNode(state, app, left, right))
        return len(self.nodes) - 1

    def add_leaf(self, state: State) -> int:
        return self.add(state)

    def __getitem__(self, u: int) -> TreeNode:
        return self.nodes[u]

    def __len__(self) -> int:
        return len(self.nodes)

    def reachable(self, root: int | None = None) -> list[int]:
        """Distinct reachable node ids in depth-first preorder."""
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

    def compact(self) -> DecisionTree:
        """Copy holding only reachable nodes, renumbered in preorder with root 0."""
        order = self.reachable()
        ids = {u: i for i, u in enumerate(order)}
        out = []
        for u in order:
            nd = self.nodes[u]
            if nd.is_leaf:
                out.append(TreeNode(nd.state, nd.app))
            else:
                out.append(TreeNode(nd.state, nd.app, ids[nd.left], ids[nd.right]))
        return DecisionTree(out, 0)

    def signature(self) -> tuple:
        c = self.compact()
        return tuple((nd.state, nd.app, nd.left, nd.right) for nd in c.nodes)

    def depth(self) -> int:
        memo: dict[int, int] = {}

        def go(u: int) -> int:
            if u in memo:
                return memo[u]
            nd = self.nodes[u]
            d = 0 if nd.is_leaf else 1 + max(go(nd.left), go(nd.right))
            memo[u] = d
            return d

        return go(self.root)

    def to_json_obj(self) -> list[dict]:
        c = self.compact()
        return [
            {"state": nd.state.to_json(), "app": nd.app, "left": nd.left, "right": nd.right}
            for nd in c.nodes
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> DecisionTree:
        return cls.from_json_obj(json.loads(text))

    @classmethod
    def from_json_obj(cls, data: list[dict]) -> DecisionTree:
        nodes = [
            TreeNode(State.from_json(d["state"]), int(d["app"]), d["left"], d["right"])
            for d in data
        ]
        return cls(nodes, 0)


def leaf_tree(state: State) -> DecisionTree:
    t = DecisionTree()
    t.add_leaf(state)
    return t


# --- rewards -----------------------------------------------------------------


def subtree_rewards(tree: DecisionTree, inst: Instance, root: int | None = None) -> dict[int, float]:
    """R_tree(T(u)) for every node reachable from root, bottom-up."""
    vals, probs = inst.values, inst.probs
    out: dict[int, float] = {}
    root = tree.root if root is None else root
    stack = [(root, False)]
    while stack:
        u, expanded = stack.pop()
        if u in out:
            continue
        nd = tree.nodes[u]
        if nd.is_leaf:
            out[u] = 0.0
        elif expanded:
            p = probs[nd.app]
            out[u] = p * (vals[nd.app] + out[nd.right]) + (1.0 - p) * out[nd.left]
        else:
            stack.append((u, True))
            if nd.right not in out:
                stack.append((nd.right, False))
            if nd.left not in out:
                stack.append((nd.left, False))
    return out


def tree_reward(tree: DecisionTree, inst: Instance, node: int | None = None) -> float:
    node = tree.root if node is None else node
    if not 0 <= node < len(tree.nodes):
        raise KeyError(f"unknown node id {node}")
    return subtree_rewards(tree, inst, node)[node]


@dataclass(frozen=True)
class RootToLeafPath:
    nodes: tuple[int, ...]
    turns: tuple[bool, ...]  # one per internal node, True for a right turn

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(u for u, r in zip(self.nodes, self.turns) if r)

    @property
    def label(self) -> str:
        return "".join("R" if r else "L" for r in self.turns)

    def value(self, tree: DecisionTree, inst: Instance) -> float:
        return sum(inst.values[tree.nodes[u].app] for u in self.active)

    def probability(self, tree: DecisionTree, inst: Instance) -> float:
        pr = 1.0
        for u, r in zip(self.nodes, self.turns):
            p = inst.probs[tree.nodes[u].app]
            pr *= p if r else 1.0 - p
        return pr


def iter_paths(tree: DecisionTree, root: int | None = None) -> Iterator[RootToLeafPath]:
    """Root-to-leaf paths, left branch first."""
    root = tree.root if root is None else root

    def go(u: int, nodes: tuple, turns: tuple):
        nd = tree.nodes[u]
        nodes = nodes + (u,)
        if nd.is_leaf:
            yield RootToLeafPath(nodes, turns)
            return
        yield from go(nd.left, nodes, turns + (False,))
        yield from go(nd.right, nodes, turns + (True,))

    yield from go(root, (), ())


def path_distribution(tree: DecisionTree, inst: Instance) -> list[tuple[RootToLeafPath, float]]:
    return [(P, P.probability(tree, inst)) for P in iter_paths(tree)]


# --- validity ----------------------------------------------------------------


def validate_tree(tree: DecisionTree, inst: Instance, *, exact_states: bool = False,
                  allow_early_stop: bool = False, check_consistency: bool = True) -> Violation | None:
    """Check validity properties 1-4 plus the child-state rule.

    By default a child's label only has to be dominated by the arithmetic
    successor (later stage, no more open positions, subset of applicants),
    which is what subtree replacement produces. ``exact_states`` demands
    equality instead.
    """
    n, T, k = inst.n, inst.T, inst.k
    nodes = tree.nodes
    choice_of: dict[State, int] = {}

    for u in tree.reachable():
        nd = nodes[u]
        st = nd.state
        if check_consistency and st in choice_of and choice_of[st] != nd.app:
            return Violation("4", f"state {st} chooses {choice_of[st]} and {nd.app}", (u,))
        choice_of[st] = nd.app
        if st.avail >> n or popcount(st.avail) < n - (st.t - 1):
            return Violation("state", f"node {u} label {st} has too few or unknown applicants", (u,))
        if nd.is_leaf:
            if nd.app != VIRTUAL:
                return Violation("leaf", f"leaf {u} carries applicant {nd.app}", (u,))
            if not allow_early_stop and not st.is_terminal(T):
                return Violation("leaf", f"leaf {u} has non-terminal state {st}", (u,))
            continue
        a = nd.app
        if not 0 <= a < n:
            return Violation("app", f"node {u} offers unknown applicant {a}", (u,))
        if not st.avail >> a & 1:
            return Violation("app", f"node {u} offers unavailable applicant {a}", (u,))
        if st.t > T or st.k < 1:
            return Violation("state", f"internal node {u} at terminal state {st}", (u,))
        rest = st.avail & ~(1 << a)
        for child, kk in ((nd.left, st.k), (nd.right, st.k - 1)):
            cs = nodes[child].state
            if exact_states:
                ok = cs == (st.t + 1, kk, rest)
            else:
                ok = cs.t >= st.t + 1 and cs.k <= kk and cs.avail & ~rest == 0
            if not ok:
                return Violation("child", f"child {child} of {u} has state {cs}", (u, child))

    # positional properties, checked per distinct (node, depth, rights, offered)
    seen = set()
    stack = [(tree.root, 0, 0, 0, ())]
    while stack:
        u, depth, rights, offered, path = stack.pop()
        key = (u, depth, rights, offered)
        if key in seen:
            continue
        seen.add(key)
        path = path + (u,)
        nd = nodes[u]
        if nd.is_leaf:
            continue
        if depth + 1 > T:
            return Violation("1", f"depth exceeds T={T}", path)
        if offered >> nd.app & 1:
            return Violation("3", f"applicant {nd.app} offered twice on a path", path)
        off = offered | (1 << nd.app)
        stack.append((nd.left, depth + 1, rights, off, path))
        if rights + 1 > k:
            return Violation("2", f"more than k={k} right turns", path + (nd.right,))
        stack.append((nd.right, depth + 1, rights + 1, off, path))
    return None


# --- unrolling policies ------------------------------------------------------


class PolicyError(ValueError):
    pass


def policy_tree_from_function(inst: Instance, policy: Callable[[State], int],
                              root: State | None = None) -> DecisionTree:
    """Unroll a state -> applicant function into an explicit tree.

    Nodes are memoized on state, so equal states share one subtree.
    """
    tree = DecisionTree()
    memo: dict[State, int] = {}
    T = inst.T

    def build(st: State) -> int:
        if st in memo:
            return memo[st]
        if st.is_terminal(T):
            u = tree.add_leaf(st)
        else:
            a = policy(st)
            if not (isinstance(a, int) and 0 <= a < inst.n and st.avail >> a & 1):
                raise PolicyError(f"policy chose unavailable applicant {a!r} at {st}")
            rest = st.avail & ~(1 << a)
            left = build(State(st.t + 1, st.k, rest))
            right = build(State(st.t + 1, st.k - 1, rest))
            u = tree.add(st, a, left, right)
        memo[st] = u
        return u

    tree.root = build(inst.root_state() if root is None else root)
    return tree


# --- worked example ----------------------------------------------------------


def three_applicant_example() -> tuple[Instance, DecisionTree]:
    """Three applicants, two positions, two stages; offer 0, then 1 on
    rejection or 2 on acceptance. Expected reward 3."""
    inst = Instance((1.0, 2.0, 3.0), (0.5, 1.0, 1.0), 2, 2)

    def policy(st: State) -> int:
        if st.t == 1:
            return 0
        return 1 if st.k == 2 else 2

    return inst, policy_tree_from_function(inst, policy)
