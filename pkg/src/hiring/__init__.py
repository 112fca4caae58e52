"""Adaptive policies for the sequential hiring problem."""

from __future__ import annotations

from ._backend import BACKEND
from .core import DecisionTree, Instance, State, tree_reward, validate_instance, validate_tree

__all__ = [
    "BACKEND",
    "DecisionTree",
    "Instance",
    "State",
    "tree_reward",
    "validate_instance",
    "validate_tree",
]
