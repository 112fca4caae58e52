"""Class-vector dynamic program over the mixed-rounded instance.

Within a class all applicants share one acceptance probability, so an
optimal policy may always offer the best remaining member of a class. The
state then shrinks to (t, k_t, L) with L counting how many members of each
class have been used.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction

from .core import DecisionTree, Flavor, Instance, State, policy_tree_from_function
from .rounding import ClassPartition

NONE = -1


class QptasError(ValueError):
    pass


@dataclass
class QptasMemo:
    table: dict[tuple[int, int, tuple[int, ...]], tuple[float, int]]
    partition: ClassPartition

    def __len__(self) -> int:
        return len(self.table)

    def to_json(self) -> str:
        return json.dumps(
            [{"t": t, "k": k, "L": list(L), "value": v, "class": m} for (t, k, L), (v, m) in self.table.items()]
        )


def state_bound(inst: Instance, partition: ClassPartition) -> int:
    return inst.k * (inst.T + 1) * math.prod(len(c) + 1 for c in partition.classes)


def qptas_solve(mixed: Instance, partition: ClassPartition, *, rational: bool = False) -> tuple[float, QptasMemo]:
    """F(1, k, 0) and the memo of class choices.

    With ``rational=True`` every product and sum is carried out in exact
    rational arithmetic on the (binary) float inputs, and the value is a
    Fraction.
    """
    if mixed.flavor != Flavor.MIXED_ROUNDED:
        raise QptasError("qptas_solve expects the mixed-rounded instance")
    if len(partition.class_of) != mixed.n:
        raise QptasError("partition does not match the instance")
    classes = partition.classes
    sizes = [len(c) for c in classes]
    n, T = mixed.n, mixed.T
    num = Fraction if rational else float
    vals = [num(x) for x in mixed.values]
    probs = [num(x) for x in mixed.probs]
    zero, one = num(0), num(1)
    table: dict[tuple[int, int, tuple[int, ...]], tuple[float, int]] = {}

    def F(t: int, kk: int, L: tuple[int, ...], used: int) -> float:
        key = (t, kk, L)
        hit = table.get(key)
        if hit is not None:
            return hit[0]
        if t == T + 1 or kk == 0 or used == n:
            table[key] = (zero, NONE)
            return zero
        best, arg = -one, NONE
        for m, size in enumerate(sizes):
            if L[m] == size:
                continue
            a = classes[m][L[m]]
            L2 = L[:m] + (L[m] + 1,) + L[m + 1:]
            p = probs[a]
            val = p * (vals[a] + F(t + 1, kk - 1, L2, used + 1)) + (one - p) * F(t + 1, kk, L2, used + 1)
            if val > best:
                best, arg = val, m
        table[key] = (best, arg)
        return best

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * T + 100))
    try:
        value = F(1, mixed.k, (0,) * len(sizes), 0)
    finally:
        sys.setrecursionlimit(limit)
    assert len(table) <= state_bound(mixed, partition), "class-state count exceeds its bound"
    return value, QptasMemo(table, partition)


def class_vector(avail: int, partition: ClassPartition) -> tuple[int, ...]:
    return tuple(sum(1 for a in c if not avail >> a & 1) for c in partition.classes)


def qptas_policy_tree(memo: QptasMemo, mixed: Instance, partition: ClassPartition) -> DecisionTree:
    """Expand the class choices into a tree over applicant ids."""
    classes = partition.classes

    def policy(st: State) -> int:
        L = class_vector(st.avail, partition)
        _, m = memo.table[(st.t, st.k, L)]
        if m == NONE:
            raise QptasError(f"no class choice stored for {st}")
        return classes[m][L[m]]

    return policy_tree_from_function(mixed, policy)


def qptas(inst: Instance, eps: float):
    """Round, solve, and expand; returns (F value, tree, rounded instance)."""
    from .rounding import round_instance

    ri = round_instance(inst, eps)
    value, memo = qptas_solve(ri.mixed, ri.partition)
    return value, qptas_policy_tree(memo, ri.mixed, ri.partition), ri


def check_order_by_value(tree: DecisionTree, partition: ClassPartition) -> int | None:
    """First node whose applicant is not the top available member of its class."""
    full = (1 << len(partition.class_of)) - 1
    seen = set()
    stack = [(tree.root, full)]
    while stack:
        u, avail = stack.pop()
        if (u, avail) in seen:
            continue
        seen.add((u, avail))
        nd = tree.nodes[u]
        if nd.is_leaf:
            continue
        a = nd.app
        top = next((b for b in partition.classes[partition.class_of[a]] if avail >> b & 1), None)
        if top != a:
            return u
        rest = avail & ~(1 << a)
        stack.append((nd.left, rest))
        stack.append((nd.right, rest))
    return None


# --- exchange argument -----------------------------------------------------------


def offer_probability(tree: DecisionTree, inst: Instance, node: int, applicant: int) -> float:
    """Probability that `applicant` receives an offer inside T(node)."""
    P: dict[int, float] = {}
    for u in tree.postorder(node):
        nd = tree.nodes[u]
        if nd.is_leaf:
            P[u] = 0.0
        elif nd.app == applicant:
            P[u] = 1.0
        else:
            p = inst.probs[nd.app]
            P[u] = p * P[nd.right] + (1.0 - p) * P[nd.left]
    return P[node]


def _swap_bits(mask: int, a: int, b: int) -> int:
    if (mask >> a & 1) != (mask >> b & 1):
        mask ^= (1 << a) | (1 << b)
    return mask


def swap_surgery(tree: DecisionTree, node: int, i_plus: int) -> DecisionTree:
    """T(node) with app(node) replaced by i_plus and i_plus, app(node)
    exchanged everywhere below."""
    i_minus = tree.nodes[node].app
    out = DecisionTree()
    new: dict[int, int] = {}
    for u in tree.postorder(node):
        nd = tree.nodes[u]
        t, kk, avail = nd.state
        st = State(t, kk, _swap_bits(avail, i_plus, i_minus))
        if nd.is_leaf:
            new[u] = out.add_leaf(st)
            continue
        app = {i_plus: i_minus, i_minus: i_plus}.get(nd.app, nd.app)
        new[u] = out.add(st, app, new[nd.left], new[nd.right])
    # both applicants are available at the root, so its label is unchanged
    out.root = new[node]
    return out.compact()


def swap_gain(tree: DecisionTree, inst: Instance, node: int, i_plus: int) -> float:
    """(v+ - v-) * p * (1 - (p*p_R + (1-p)*p_L)) for the surgery at node."""
    nd = tree.nodes[node]
    i_minus = nd.app
    p = inst.probs[i_minus]
    pR = offer_probability(tree, inst, nd.right, i_plus)
    pL = offer_probability(tree, inst, nd.left, i_plus)
    return (inst.values[i_plus] - inst.values[i_minus]) * p * (1.0 - (p * pR + (1.0 - p) * pL))
