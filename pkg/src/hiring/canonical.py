"""The L>=R and V+R>=L properties: checkers and the rewrites that enforce them."""

from __future__ import annotations

from dataclasses import dataclass

from .blockpolicy import BlockTree, block_subtree_rewards, rank_rewards
from .core import DecisionTree, Instance, subtree_rewards, tree_reward

SLACK = 1e-12  # absolute slack on rewrite triggers; exact ties are left alone
CHECK_RTOL = 1e-9

L_GE_R = "L>=R"
V_R_GE_L = "V+R>=L"


@dataclass(frozen=True)
class CanonicalReport:
    modified: bool
    case1_count: int
    case2_count: int
    reward_before: float
    reward_after: float


@dataclass(frozen=True)
class CanonicalViolation:
    node: int
    prop: str
    lhs: float  # should satisfy lhs >= rhs
    rhs: float
    rank: int | None = None


def _tol(a: float, b: float) -> float:
    return CHECK_RTOL * max(1.0, abs(a), abs(b))


def check_canonical(tree: DecisionTree, inst: Instance) -> CanonicalViolation | None:
    R = subtree_rewards(tree, inst)
    for u in tree.reachable():
        nd = tree.nodes[u]
        if nd.is_leaf:
            continue
        rl, rr = R[nd.left], R[nd.right]
        if rl < rr - _tol(rl, rr):
            return CanonicalViolation(u, L_GE_R, rl, rr)
        up = inst.values[nd.app] + rr
        if up < rl - _tol(up, rl):
            return CanonicalViolation(u, V_R_GE_L, up, rl)
    return None


def canonicalize(tree: DecisionTree, inst: Instance) -> tuple[DecisionTree, CanonicalReport]:
    """Depth-first, children before parent.

    Case 1 (L < R) points the left arc at the right subtree; case 2
    (V + R < L) replaces the node by its left subtree.
    """
    before = tree_reward(tree, inst)
    out = DecisionTree()
    new_id: dict[int, int] = {}
    reward: dict[int, float] = {}
    c1 = c2 = 0
    vals, probs = inst.values, inst.probs
    nodes = tree.nodes

    for u in tree.postorder():
        nd = nodes[u]
        if nd.is_leaf:
            w = out.add_leaf(nd.state)
            new_id[u], reward[w] = w, 0.0
            continue
        L, Rt = new_id[nd.left], new_id[nd.right]
        rl, rr = reward[L], reward[Rt]
        if rl < rr - SLACK:
            L, rl = Rt, rr
            c1 += 1
        v = vals[nd.app]
        if rl > v + rr + SLACK:
            new_id[u] = L
            c2 += 1
            continue
        p = probs[nd.app]
        w = out.add(nd.state, nd.app, L, Rt)
        reward[w] = p * (v + rr) + (1.0 - p) * rl
        new_id[u] = w

    out.root = new_id[tree.root]
    out = out.compact()
    after = tree_reward(out, inst)
    return out, CanonicalReport(bool(c1 or c2), c1, c2, before, after)


# --- block variant -------------------------------------------------------------


def check_block_canonical(btree: BlockTree, inst: Instance) -> CanonicalViolation | None:
    R = block_subtree_rewards(btree, inst)
    for u in btree.reachable():
        nd = btree.nodes[u]
        if nd.is_leaf:
            continue
        rr = R[nd.right]
        ranks = rank_rewards(btree, inst, u, R)
        for r, a in enumerate(nd.block, start=1):
            nxt = ranks[r]  # R(u, r+1)
            if nxt < rr - _tol(nxt, rr):
                return CanonicalViolation(u, L_GE_R, nxt, rr, r)
            up = inst.values[a] + rr
            if up < nxt - _tol(up, nxt):
                return CanonicalViolation(u, V_R_GE_L, up, nxt, r)
    return None


def canonicalize_block(btree: BlockTree, inst: Instance) -> tuple[BlockTree, CanonicalReport]:
    """Block analogue: ranks are visited in reverse order within each node.

    Case 1 only fires at the last remaining rank; case 2 drops the applicant.
    A block left empty is spliced out in favour of its left subtree.
    """
    if btree.has_coins():
        raise ValueError("canonicalize_block needs a coin-free tree; strip coins first")
    before = block_subtree_rewards(btree, inst)[btree.root]
    out = BlockTree()
    new_id: dict[int, int] = {}
    reward: dict[int, float] = {}
    c1 = c2 = 0
    vals, probs = inst.values, inst.probs

    for u in btree.postorder():
        nd = btree.nodes[u]
        if nd.is_leaf:
            w = out.add_leaf(nd.state)
            new_id[u], reward[w] = w, 0.0
            continue
        L, Rt = new_id[nd.left], new_id[nd.right]
        rr = reward[Rt]
        tail = reward[L]
        kept: list[int] = []
        for a in reversed(nd.block):
            v = vals[a]
            if not kept and tail < rr - SLACK:
                L, tail = Rt, rr
                c1 += 1
            if tail > v + rr + SLACK:
                c2 += 1
                continue
            p = probs[a]
            tail = p * (v + rr) + (1.0 - p) * tail
            kept.append(a)
        if not kept:
            new_id[u] = L
            continue
        w = out.add(nd.state, tuple(reversed(kept)), L, Rt)
        reward[w] = tail
        new_id[u] = w

    out.root = new_id[btree.root]
    out = out.compact()
    after = block_subtree_rewards(out, inst)[out.root]
    return out, CanonicalReport(bool(c1 or c2), c1, c2, before, after)
