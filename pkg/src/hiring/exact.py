"""Ground-truth solvers: the exact bitmask DP and the greedy order-by-value DP."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._backend import kernels
from .core import VIRTUAL, DecisionTree, Instance, State, policy_tree_from_function, popcount

ORACLE_MAX_N = 20


class OracleRefused(ValueError):
    """The instance is too large for the exponential oracle."""


class ExactMemo:
    """Optimal value and choice for every reachable state (t, k_t, mask).

    Backed by dense tables over (min(k_t, K), mask); t is implied by the
    mask on reachable states and is checked on lookup.
    """

    def __init__(self, inst: Instance, V: np.ndarray, choice: np.ndarray):
        self.inst = inst
        self.V = V
        self.choice = choice
        self.K = V.shape[0] - 1

    def _key(self, state: State) -> tuple[int, int]:
        n = self.inst.n
        if state.avail >> n:
            raise KeyError(f"{state} names applicants outside the instance")
        if state.t != n - popcount(state.avail) + 1:
            raise KeyError(f"{state} is not reachable from the root")
        return min(state.k, self.K), state.avail

    def __getitem__(self, state: State) -> tuple[float, int]:
        if state.is_terminal(self.inst.T):
            return 0.0, VIRTUAL
        kk, mask = self._key(state)
        return float(self.V[kk, mask]), int(self.choice[kk, mask])

    def value(self, state: State) -> float:
        return self[state][0]

    def __len__(self) -> int:
        return int(self.V.size)


@dataclass
class ExactResult:
    value: float
    tree: DecisionTree
    memo: ExactMemo

    def __iter__(self):
        return iter((self.value, self.tree))


def exact_memo(inst: Instance) -> ExactMemo:
    if inst.n > ORACLE_MAX_N:
        raise OracleRefused(f"exact oracle is limited to n <= {ORACLE_MAX_N}, got n={inst.n}")
    V, C = kernels.exact_table(list(inst.values), list(inst.probs), inst.k, inst.T)
    return ExactMemo(inst, V, C)


def optimal_exact(inst: Instance) -> ExactResult:
    memo = exact_memo(inst)
    tree = policy_tree_from_function(inst, lambda s: memo[s][1])
    return ExactResult(memo.value(inst.root_state()), tree, memo)


def optimal_value(inst: Instance) -> float:
    return exact_memo(inst).value(inst.root_state())


def optimal_value_rational(inst: Instance) -> Fraction:
    """The optimum in exact rational arithmetic over the binary float inputs."""
    if inst.n > ORACLE_MAX_N:
        raise OracleRefused(f"exact oracle is limited to n <= {ORACLE_MAX_N}, got n={inst.n}")
    n, T = inst.n, inst.T
    vals = [Fraction(x) for x in inst.values]
    probs = [Fraction(x) for x in inst.probs]
    memo: dict[tuple[int, int], Fraction] = {}

    def V(kk: int, mask: int) -> Fraction:
        t = n - popcount(mask) + 1
        if t > T or kk == 0 or mask == 0:
            return Fraction(0)
        kk = min(kk, T - t + 1)
        key = (kk, mask)
        if key not in memo:
            best = Fraction(-1)
            for i in range(n):
                if mask >> i & 1:
                    rest = mask ^ (1 << i)
                    p = probs[i]
                    best = max(best, p * (vals[i] + V(kk - 1, rest)) + (1 - p) * V(kk, rest))
            memo[key] = best
        return memo[key]

    return V(inst.k, inst.full_mask)


# --- greedy family -----------------------------------------------------------


def value_order(inst: Instance, ids=None) -> list[int]:
    """Applicant ids by weakly decreasing value, ties by lowest index."""
    ids = range(inst.n) if ids is None else ids
    return sorted(ids, key=lambda i: (-inst.values[i], i))


def _greedy_tables(inst: Instance):
    order = value_order(inst)
    n, T = inst.n, inst.T
    K = min(inst.k, T)
    vals = [inst.values[a] for a in order]
    ps = [inst.probs[a] for a in order]

    @lru_cache(maxsize=None)
    def G(i: int, kk: int, s: int) -> tuple[float, bool]:
        """(value, offer?) for sorted position i, kk open positions, s stages left."""
        if i == n or kk == 0 or s == 0:
            return 0.0, False
        kk = min(kk, s)
        p = ps[i]
        offer = p * (vals[i] + G(i + 1, kk - 1, s - 1)[0]) + (1.0 - p) * G(i + 1, kk, s - 1)[0]
        skip = G(i + 1, kk, s)[0]
        if offer >= skip:
            return offer, True
        return skip, False

    return order, G, K


def greedy_value(inst: Instance) -> float:
    _, G, K = _greedy_tables(inst)
    return G(0, K, inst.T)[0]


def greedy_dp(inst: Instance) -> tuple[float, DecisionTree]:
    """Best policy that walks the value-sorted list, offering or skipping.

    When the sorted list runs out before the state is terminal, the tree
    offers the skipped applicants in value order; those extra offers can
    only add reward, so the tree's reward is at least the reported value.
    """
    order, G, K = _greedy_tables(inst)
    pos = {a: j for j, a in enumerate(order)}
    n, T, full = inst.n, inst.T, inst.full_mask

    def policy(st: State) -> int:
        offered = full & ~st.avail
        i = 1 + max((pos[a] for a in range(n) if offered >> a & 1), default=-1)
        s = T - st.t + 1
        for j in range(i, n):
            if st.avail >> order[j] & 1 and G(j, st.k, s)[1]:
                return order[j]
        for a in order:
            if st.avail >> a & 1:
                return a
        raise AssertionError("non-terminal state without available applicants")

    tree = policy_tree_from_function(inst, policy)
    return G(0, K, T)[0], tree
