"""Monte Carlo evaluation of standard and block trees.

Trial i consumes uniforms i*W .. i*W+W-1 of one Philox stream keyed by the
seed, where W bounds the draws on any root-to-leaf walk. Trials therefore
do not depend on how they are chunked.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ._backend import kernels
from .blockpolicy import BlockTree
from .core import DecisionTree, Instance

CHUNK = 1 << 15


@dataclass(frozen=True)
class SimReport:
    trials: int
    mean_reward: float
    std_error: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SimReport:
        return cls(**json.loads(text))


@dataclass(frozen=True)
class FlatPolicy:
    ptr: np.ndarray
    apps: np.ndarray
    left: np.ndarray
    right: np.ndarray
    coin: np.ndarray  # -1 where the node has no coin
    root: int
    width: int  # draws per trial, padded to a multiple of 4


def flatten(policy: DecisionTree | BlockTree) -> FlatPolicy:
    if isinstance(policy, BlockTree):
        tree = policy.compact()
        blocks = [nd.block for nd in tree.nodes]
        coins = [-1.0 if nd.coin is None else float(nd.coin) for nd in tree.nodes]
    elif isinstance(policy, DecisionTree):
        tree = policy.compact()
        blocks = [() if nd.is_leaf else (nd.app,) for nd in tree.nodes]
        coins = [-1.0] * len(tree.nodes)
    else:
        raise TypeError(f"cannot simulate a {type(policy).__name__}")
    nodes = tree.nodes
    ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(b) for b in blocks])
    apps = np.array([a for b in blocks for a in b], dtype=np.int64)
    left = np.array([-1 if nd.is_leaf else nd.left for nd in nodes], dtype=np.int64)
    right = np.array([-1 if nd.is_leaf else nd.right for nd in nodes], dtype=np.int64)
    draws: dict[int, int] = {}
    for u in tree.postorder():
        nd = nodes[u]
        if nd.is_leaf:
            draws[u] = 0
        else:
            extra = 1 if coins[u] >= 0.0 else 0
            draws[u] = len(blocks[u]) + extra + max(draws[nd.left], draws[nd.right])
    width = max(4, -(-draws[tree.root] // 4) * 4)
    return FlatPolicy(ptr, apps, left, right, np.array(coins, dtype=np.float64), tree.root, width)


def uniforms(seed: int, start: int, count: int, width: int) -> np.ndarray:
    """Rows start..start+count-1 of the per-trial uniform matrix."""
    bitgen = np.random.Philox(key=seed, counter=start * width // 4)
    return np.random.Generator(bitgen).random((count, width))


def simulate_rewards(policy: DecisionTree | BlockTree, inst: Instance, trials: int, seed: int,
                     *, backend=None) -> np.ndarray:
    if trials < 1:
        raise ValueError("trials must be positive")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    kern = kernels if backend is None else backend
    fp = flatten(policy)
    probs = np.asarray(inst.probs, dtype=np.float64)
    values = np.asarray(inst.values, dtype=np.float64)
    out = np.empty(trials, dtype=np.float64)
    for a in range(0, trials, CHUNK):
        b = min(trials, a + CHUNK)
        U = uniforms(seed, a, b - a, fp.width)
        out[a:b] = kern.simulate_blocks(fp.ptr, fp.apps, fp.left, fp.right, fp.coin, probs, values,
                                        inst.k, inst.T, fp.root, U)
    return out


def simulate(policy: DecisionTree | BlockTree, inst: Instance, trials: int, seed: int, *, backend=None) -> SimReport:
    r = simulate_rewards(policy, inst, trials, seed, backend=backend)
    std = float(r.std(ddof=1)) if trials > 1 else 0.0
    return SimReport(trials, float(r.mean()), std / float(np.sqrt(trials)), seed)
