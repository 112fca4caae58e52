"""Acceptance-probability classes and the rounded instances I-up and I-mixed."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .core import Flavor, Instance


class RoundingError(ValueError):
    pass


@dataclass(frozen=True)
class ClassPartition:
    eps: float
    gamma: float
    M: int
    bounds: tuple[float, ...]  # bounds[m] = gamma * (1+eps)**m, m = 0..M
    classes: tuple[tuple[int, ...], ...]  # value-sorted member lists, C_0..C_M
    class_prob: tuple[float, ...]  # p^(0) = gamma, p^(m) = bounds[m-1]
    class_of: tuple[int, ...]  # per applicant

    def members(self, m: int) -> tuple[int, ...]:
        return self.classes[m]

    def rank_in_class(self) -> dict[int, int]:
        return {a: j for cls in self.classes for j, a in enumerate(cls)}

    def nonempty(self) -> list[int]:
        return [m for m, c in enumerate(self.classes) if c]

    def to_dict(self) -> dict:
        return {"eps": self.eps, "gamma": self.gamma, "M": self.M, "class_of": list(self.class_of)}


def class_bounds(gamma: float, eps: float) -> list[float]:
    """gamma*(1+eps)**m by repeated multiplication until the bound reaches 1."""
    bounds = [gamma]
    while bounds[-1] < 1.0:
        bounds.append(bounds[-1] * (1.0 + eps))
    return bounds


def class_index(p: float, bounds: list[float]) -> int:
    if p <= bounds[0]:
        return 0
    lo, hi = 1, len(bounds) - 1
    while lo < hi:  # smallest m with p <= bounds[m]
        mid = (lo + hi) // 2
        if p <= bounds[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def partition_classes(inst: Instance, eps: float) -> ClassPartition:
    if not eps > 0.0:
        raise RoundingError("epsilon must be positive")
    gamma = eps / inst.T
    if gamma >= 1.0:
        raise RoundingError("epsilon too large for horizon")
    bounds = class_bounds(gamma, eps)
    M = len(bounds) - 1
    class_of = tuple(class_index(p, bounds) for p in inst.probs)
    # order members by their rounded value, which differs from v only in C_0
    key = [
        inst.probs[i] * inst.values[i] / gamma if m == 0 else inst.values[i]
        for i, m in enumerate(class_of)
    ]
    buckets: list[list[int]] = [[] for _ in range(M + 1)]
    for i, m in enumerate(class_of):
        buckets[m].append(i)
    classes = tuple(tuple(sorted(b, key=lambda i: (-key[i], i))) for b in buckets)
    class_prob = (gamma,) + tuple(bounds[:-1])
    return ClassPartition(eps, gamma, M, tuple(bounds), classes, class_prob, class_of)


def round_up(inst: Instance, partition: ClassPartition) -> Instance:
    g = partition.gamma
    vals, probs = list(inst.values), list(inst.probs)
    for i in partition.classes[0]:
        r = inst.probs[i] * inst.values[i]
        probs[i] = g
        vals[i] = r / g
    return Instance(vals, probs, inst.k, inst.T, Flavor.ROUNDED_UP)


def mixed_round(up: Instance, partition: ClassPartition) -> Instance:
    probs = [partition.class_prob[m] for m in partition.class_of]
    return Instance(up.values, probs, up.k, up.T, Flavor.MIXED_ROUNDED)


@dataclass(frozen=True)
class RoundedInstance:
    base: Instance
    up: Instance
    mixed: Instance
    partition: ClassPartition
    r: tuple[float, ...]

    @property
    def eps(self) -> float:
        return self.partition.eps

    def to_json(self) -> str:
        return json.dumps(
            {
                "base": self.base.to_dict(),
                "up": self.up.to_dict(),
                "mixed": self.mixed.to_dict(),
                "partition": self.partition.to_dict(),
            }
        )


def round_instance(inst: Instance, eps: float) -> RoundedInstance:
    part = partition_classes(inst, eps)
    up = round_up(inst, part)
    mixed = mixed_round(up, part)
    r = tuple(p * v for p, v in zip(inst.probs, inst.values))
    return RoundedInstance(inst, up, mixed, part, r)
