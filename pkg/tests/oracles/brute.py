"""Exhaustive enumeration over explicit policy trees.

Trees are nested tuples ``(applicant, reject_subtree, accept_subtree)``
with ``None`` for a leaf. Nothing here imports the package solvers.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product


def all_policy_trees(n: int, k: int, T: int, t: int = 1, avail: frozenset | None = None):
    """Every tree that keeps offering until the state is terminal."""
    avail = frozenset(range(n)) if avail is None else avail
    if t > T or k == 0 or not avail:
        yield None
        return
    for a in sorted(avail):
        rest = avail - {a}
        lefts = list(all_policy_trees(n, k, T, t + 1, rest))
        rights = list(all_policy_trees(n, k - 1, T, t + 1, rest))
        for left, right in product(lefts, rights):
            yield (a, left, right)


def count_policy_trees(n: int, k: int, T: int) -> int:
    return sum(1 for _ in all_policy_trees(n, k, T))


def paths(tree, prob=Fraction(1), value=Fraction(0), values=None, probs=None):
    """(probability, total value) for every root-to-leaf path, left first."""
    if tree is None:
        yield prob, value
        return
    a, left, right = tree
    p = probs[a]
    yield from paths(left, prob * (1 - p), value, values, probs)
    yield from paths(right, prob * p, value + values[a], values, probs)


def path_reward(tree, values, probs) -> Fraction:
    """Expected reward as a sum over paths, in exact arithmetic."""
    vs = [Fraction(v) for v in values]
    ps = [Fraction(p) for p in probs]
    return sum((pr * val for pr, val in paths(tree, values=vs, probs=ps)), Fraction(0))


def brute_optimum(values, probs, k: int, T: int) -> Fraction:
    n = len(values)
    return max(path_reward(tr, values, probs) for tr in all_policy_trees(n, k, T))


def float_reward(tree, values, probs) -> float:
    """Bottom-up float evaluation, same operation order as the package.

    The update is monotone in both subtree values under round-to-nearest,
    so the maximum of this over all trees is the float DP optimum exactly.
    """
    if tree is None:
        return 0.0
    a, left, right = tree
    p = probs[a]
    return p * (values[a] + float_reward(right, values, probs)) + (1.0 - p) * float_reward(left, values, probs)
