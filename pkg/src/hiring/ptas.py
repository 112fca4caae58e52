"""Regime split, guessing grids, applicant assignment, and candidate selection.

The candidate family is the set of block trees obtained from every guess
vector by the prefix-assignment rule, applied recursively to right
subtrees. Enumerating it literally is hopeless beyond toy budgets, so
`FamilySolver` finds its best member by dynamic programming: a guess only
matters through the per-class applicant counts it induces, each count has
a cheapest grid representative, and right subtrees depend on nothing but
the state they start from. `enumerate_guesses` + `assign_and_build` keep
the literal route available for cross-checks.
"""

from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterator

from .blockpolicy import BlockTree, block_tree_reward, rejection_probability
from .canonical import canonicalize_block
from .core import DecisionTree, Instance, State, mask_of, tree_reward
from .exact import ORACLE_MAX_N, greedy_dp, greedy_value, optimal_exact
from .rounding import ClassPartition, RoundedInstance, round_instance

DEFAULT_CAP = 10**7
COVER_RTOL = 1e-12


class Regime(str, enum.Enum):
    MANY = "ManyPositions"
    FEW = "FewPositions"


@dataclass(frozen=True)
class RegimeDecision:
    regime: Regime
    threshold: float
    k: int
    eps: float


def classify_regime(inst: Instance, eps: float) -> RegimeDecision:
    if not eps > 0.0:
        raise ValueError("epsilon must be positive")
    threshold = 1.0 / eps**2
    regime = Regime.MANY if inst.k >= threshold else Regime.FEW
    return RegimeDecision(regime, threshold, inst.k, eps)


def many_positions_factor(k: int) -> float:
    """1 - e^{-k} k^k / k!, evaluated in log space."""
    return 1.0 - math.exp(-k + k * math.log(k) - math.lgamma(k + 1))


def underestimate_opt(mixed: Instance) -> float:
    """Greedy-family optimum: at least half the true optimum."""
    return greedy_value(mixed)


def max_path_length(eps: float) -> int:
    return max(1, math.ceil(13.0 / eps**3 * math.log(1.0 / eps)))


# --- grids -----------------------------------------------------------------------


class GridBudgetError(ValueError):
    def __init__(self, dimension: str, size: int, cap: int):
        super().__init__(f"guess grid dimension '{dimension}' has {size} points, over the cap of {cap}")
        self.dimension = dimension
        self.size = size


@dataclass(frozen=True)
class GridParams:
    F: int
    delta: float
    mu: float
    budget_units: int
    psi_menu: tuple[float, ...]  # ascending


def psi_menu(partition: ClassPartition, eps: float, mu: float) -> tuple[float, ...]:
    vals = {1.0 - p for p in partition.class_prob}
    psi_min = 1.0 - eps**3
    x = 1.0
    while x >= psi_min:
        vals.add(x)
        x /= 1.0 + mu
    return tuple(sorted(vals))


def grid_params(F: int, eps: float, k: int, partition: ClassPartition, opt_under: float,
                budget_units: int | None = None) -> GridParams:
    M = partition.M
    delta = eps * opt_under / (2.0 * k * M * F)
    mu = eps**3 / (k * F)
    b = math.floor(4.0 * k * M * F / eps**4) if budget_units is None else budget_units
    return GridParams(F, delta, mu, b, psi_menu(partition, eps, mu))


@dataclass(frozen=True)
class GuessVector:
    F: int
    contribs: tuple[tuple[int, ...], ...]  # [m][f], in units of delta, f = 0..F-1
    rejects: tuple[float, ...]  # one per non-leaf block
    delta: float
    mu: float

    def target(self, m: int, f: int) -> float:
        return self.contribs[m][f] * self.delta


def contribution_grids(n_cells: int, budget: int) -> Iterator[tuple[int, ...]]:
    """All non-negative integer vectors of length n_cells with sum <= budget,
    in lexicographic order."""
    if n_cells == 0:
        yield ()
        return
    for x in range(budget + 1):
        for rest in contribution_grids(n_cells - 1, budget - x):
            yield (x,) + rest


def count_contribution_grids(n_cells: int, budget: int) -> int:
    return math.comb(budget + n_cells, n_cells)


def guess_counts(partition: ClassPartition, eps: float, opt_under: float, k: int,
                 F_values=None, budget_units: int | None = None) -> dict[int, dict[str, int]]:
    """Closed-form grid sizes per F (stars and bars times the reject menu)."""
    F_values = range(1, max_path_length(eps) + 1) if F_values is None else F_values
    live = len(partition.nonempty())
    out = {}
    for F in F_values:
        gp = grid_params(F, eps, k, partition, opt_under, budget_units)
        c = count_contribution_grids(live * F, gp.budget_units)
        r = len(gp.psi_menu) ** (F - 1)
        out[F] = {"contributions": c, "rejects": r, "total": c * r}
    return out


def enumerate_guesses(mixed: Instance, partition: ClassPartition, eps: float, opt_under: float,
                      k_remaining: int, *, F_values=None, budget_units: int | None = None,
                      cap: int = DEFAULT_CAP) -> Iterator[GuessVector]:
    """Every guess vector for one leftmost path, F ascending then lexicographic.

    Empty classes are pinned to zero. Raises GridBudgetError before yielding
    anything if the grid is larger than `cap`.
    """
    del mixed  # the grid depends on the instance only through the partition
    F_values = list(range(1, max_path_length(eps) + 1) if F_values is None else F_values)
    counts = guess_counts(partition, eps, opt_under, k_remaining, F_values, budget_units)
    for dim in ("contributions", "rejects"):
        worst = max((c[dim] for c in counts.values()), default=0)
        if worst > cap:
            raise GridBudgetError(dim, worst, cap)
    total = sum(c["total"] for c in counts.values())
    if total > cap:
        raise GridBudgetError("total", total, cap)
    live = partition.nonempty()
    n_cls = partition.M + 1
    for F in F_values:
        gp = grid_params(F, eps, k_remaining, partition, opt_under, budget_units)
        for flat in contribution_grids(len(live) * F, gp.budget_units):
            mat = [[0] * F for _ in range(n_cls)]
            for j, m in enumerate(live):
                mat[m] = list(flat[j * F:(j + 1) * F])
            contribs = tuple(tuple(row) for row in mat)
            for rejects in itertools.product(gp.psi_menu, repeat=F - 1):
                yield GuessVector(F, contribs, tuple(rejects), gp.delta, gp.mu)


# --- assignment ------------------------------------------------------------------


def covers(total: float, target: float) -> bool:
    return total >= target - COVER_RTOL * max(1.0, abs(target))


@dataclass
class GuessTree:
    guess: GuessVector
    children: dict[int, GuessTree] = field(default_factory=dict)  # f (1-based) -> right subtree guess


@dataclass
class AssignedNode:
    node: int
    phi_before: tuple[int, ...]
    counts: tuple[int, ...]
    psi_block: float
    psi_guess: float


@dataclass
class Assignment:
    tree: BlockTree | None
    reason: str = ""
    nodes: list[AssignedNode] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.tree is not None


class _Infeasible(Exception):
    pass


def _avail_from_phi(partition: ClassPartition, phi) -> int:
    used = 0
    for m, c in enumerate(partition.classes):
        used |= mask_of(c[: phi[m]])
    return ((1 << len(partition.class_of)) - 1) & ~used


def assign_and_build(guess: GuessTree | GuessVector, mixed: Instance, partition: ClassPartition,
                     k_remaining: int | None = None, *, t0: int = 1, phi0: tuple[int, ...] | None = None,
                     ) -> Assignment:
    """Fill each block with the shortest class prefixes meeting the guessed
    contributions, attach correction coins, and recurse into right subtrees."""
    gt = guess if isinstance(guess, GuessTree) else GuessTree(guess)
    k_remaining = mixed.k if k_remaining is None else k_remaining
    phi0 = (0,) * (partition.M + 1) if phi0 is None else tuple(phi0)
    bt = BlockTree()
    log: list[AssignedNode] = []
    classes, cprob = partition.classes, partition.class_prob
    vals, T = mixed.values, mixed.T

    def leaf(t: int, kk: int, phi) -> int:
        return bt.add_leaf(State(t, kk, _avail_from_phi(partition, phi)))

    def build(g: GuessTree, kk: int, t: int, phi: tuple[int, ...]) -> int:
        gv = g.guess
        if len(gv.contribs) != partition.M + 1 or any(len(row) != gv.F for row in gv.contribs):
            raise ValueError("guess vector shape does not match the partition")
        if any(gv.contribs[m][gv.F - 1] for m in range(partition.M + 1)):
            raise _Infeasible("leaf block has a positive contribution guess")
        if kk == 0 or t > T:
            if any(any(row) for row in gv.contribs):
                raise _Infeasible("no positions or stages left for a positive guess")
            return leaf(t, kk, phi)
        specs = []  # (state, block, phi_before, counts, psi, psi_guess, f)
        for f in range(1, gv.F):
            counts = [0] * (partition.M + 1)
            members: list[int] = []
            for m in range(partition.M + 1):
                g_units = gv.contribs[m][f - 1]
                if g_units == 0:
                    continue
                target = g_units * gv.delta
                acc, c = 0.0, 0
                cls = classes[m]
                while True:
                    if phi[m] + c >= len(cls):
                        raise _Infeasible(f"class {m} runs out of applicants at block {f}")
                    acc += vals[cls[phi[m] + c]]
                    c += 1
                    if covers(cprob[m] * acc, target):
                        break
                counts[m] = c
                members.extend(cls[phi[m]:phi[m] + c])
            if not members:
                continue  # empty block: spliced out
            if t + len(members) - 1 > T:
                raise _Infeasible(f"block {f} overruns the horizon")
            block = tuple(sorted(members, key=lambda a: (-vals[a], a)))
            psi = rejection_probability(block, mixed)
            psi_g = gv.rejects[f - 1]
            if psi_g > psi * (1.0 + COVER_RTOL):
                raise _Infeasible(f"reject guess {psi_g} exceeds block rejection {psi} at block {f}")
            phi2 = tuple(phi[m] + counts[m] for m in range(partition.M + 1))
            specs.append((State(t, kk, _avail_from_phi(partition, phi)), block, phi, tuple(counts), psi, psi_g, f, phi2))
            t += len(block)
            phi = phi2
        nxt = leaf(t, kk, phi)
        for st, block, phi_b, counts, psi, psi_g, f, phi2 in reversed(specs):
            t2 = st.t + len(block)
            child = g.children.get(f)
            if child is None or kk - 1 == 0:
                right = leaf(t2, kk - 1, phi2)
            else:
                right = build(child, kk - 1, t2, phi2)
            coin = min(1.0, psi_g / psi) if psi > 0.0 else 0.0
            nxt = bt.add(st, block, nxt, right, coin)
            log.append(AssignedNode(nxt, phi_b, counts, psi, psi_g))
        return nxt

    try:
        bt.root = build(gt, k_remaining, t0, phi0)
    except _Infeasible as exc:
        return Assignment(None, str(exc), log)
    return Assignment(bt, "", log)


# --- best member of the family ---------------------------------------------------


class _CapReached(Exception):
    pass


class FamilySolver:
    """Best candidate over all guesses, by dynamic programming over
    (positions, stage, class pointers) and, along a path, the remaining
    contribution budget."""

    def __init__(self, mixed: Instance, partition: ClassPartition, eps: float, opt_under: float, *,
                 budget_units: int | None = None, F_values=None, cap: int = DEFAULT_CAP):
        self.mixed = mixed
        self.part = partition
        self.eps = eps
        self.k = mixed.k
        self.opt_under = opt_under
        self.cap = cap
        self.F_values = sorted(range(2, max_path_length(eps) + 1) if F_values is None else
                               (F for F in F_values if F >= 2))
        self.params = {F: grid_params(F, eps, self.k, partition, opt_under, budget_units) for F in self.F_values}
        self.cls_vals = [[mixed.values[a] for a in c] for c in partition.classes]
        self.cprob = partition.class_prob
        self.transitions = 0
        self.partial = False
        self._best: dict = {}
        self._path: dict = {}
        self._gmin: dict = {}

    # cheapest grid point whose minimal prefix count is c
    def g_min(self, F: int, m: int, start: int, c: int) -> int | None:
        key = (F, m, start, c)
        if key in self._gmin:
            return self._gmin[key]
        delta = self.params[F].delta
        vals = self.cls_vals[m]
        s_prev = self.cprob[m] * _prefix_sum(vals, start, c - 1)
        s_cur = self.cprob[m] * _prefix_sum(vals, start, c)
        g = max(1, math.floor(s_prev / delta)) if delta > 0 else 1
        while covers(s_prev, g * delta) and c > 1:
            g += 1
        out = g if covers(s_cur, g * delta) else None
        self._gmin[key] = out
        return out

    def _norm_budget(self, F: int, f: int, phi, bl: float) -> float:
        if math.isinf(bl):
            return bl
        delta = self.params[F].delta
        need = sum(self.cprob[m] * _prefix_sum(v, phi[m], len(v) - phi[m]) for m, v in enumerate(self.cls_vals))
        if bl * delta >= need + delta * (F - f) * (self.part.M + 1):
            return math.inf
        return bl

    def best(self, kk: int, t: int, phi: tuple[int, ...]) -> float:
        return self._best_entry(kk, t, phi)[0]

    def _best_entry(self, kk: int, t: int, phi: tuple[int, ...]):
        key = (kk, t, phi)
        hit = self._best.get(key)
        if hit is not None:
            return hit
        T = self.mixed.T
        if kk == 0 or t > T or all(phi[m] == len(v) for m, v in enumerate(self.cls_vals)):
            entry = (0.0, 1)
        else:
            entry = (0.0, 1)
            for F in self.F_values:
                if F > T - t + 2:
                    break
                val = self._path_entry(F, 1, kk, t, phi, self._norm_budget(F, 1, phi, float(self.params[F].budget_units)))[0]
                if val > entry[0]:
                    entry = (val, F)
        self._best[key] = entry
        return entry

    def _path_entry(self, F: int, f: int, kk: int, t: int, phi: tuple[int, ...], bl: float):
        """(value, choice) for blocks f..F-1 of a path; the choice is
        (counts, cost, psi_guess) or None for an empty (spliced) block."""
        key = (F, f, kk, t, phi, bl)
        hit = self._path.get(key)
        if hit is not None:
            return hit
        T = self.mixed.T
        gp = self.params[F]
        nxt_empty = self._path_entry(F, f + 1, kk, t, phi, bl)[0] if f + 1 < F else 0.0
        entry = (nxt_empty, None)
        stages = T - t + 1
        ranges = [range(0, min(len(v) - phi[m], stages) + 1) for m, v in enumerate(self.cls_vals)]
        vals, probs = self.mixed.values, self.mixed.probs
        for counts in itertools.product(*ranges):
            size = sum(counts)
            if size == 0 or size > stages:
                continue
            cost = 0
            for m, c in enumerate(counts):
                if c:
                    g = self.g_min(F, m, phi[m], c)
                    if g is None:
                        cost = None
                        break
                    cost += g
            if cost is None or cost > bl:
                continue
            self.transitions += 1
            if self.transitions > self.cap:
                raise _CapReached()
            members = [a for m, c in enumerate(counts) for a in self.part.classes[m][phi[m]:phi[m] + c]]
            block = sorted(members, key=lambda a: (-vals[a], a))
            A, pre = 0.0, 1.0
            for a in block:
                A += pre * probs[a] * vals[a]
                pre *= 1.0 - probs[a]
            psi = pre
            feas = [x for x in gp.psi_menu if x <= psi * (1.0 + COVER_RTOL)]
            if not feas:
                continue
            t2 = t + size
            phi2 = tuple(p + c for p, c in zip(phi, counts))
            rr = self.best(kk - 1, t2, phi2)
            nxt = self._path_entry(F, f + 1, kk, t2, phi2, self._norm_budget(F, f + 1, phi2, bl - cost))[0] if f + 1 < F else 0.0
            psi_g = feas[-1] if nxt >= rr else feas[0]
            val = A + (1.0 - psi_g) * rr + psi_g * nxt
            if val > entry[0]:
                entry = (val, (counts, cost, psi_g))
        self._path[key] = entry
        return entry

    def solve(self) -> tuple[float, BlockTree]:
        phi0 = (0,) * (self.part.M + 1)
        T, k = self.mixed.T, self.k
        best_val, best_F = 0.0, 1
        for F in self.F_values:
            if F > T + 1:
                break
            try:
                val = self._path_entry(F, 1, k, 1, phi0, self._norm_budget(F, 1, phi0, float(self.params[F].budget_units)))[0]
            except _CapReached:
                self.partial = True
                break
            if val > best_val:
                best_val, best_F = val, F
        self._best[(k, 1, phi0)] = (best_val, best_F)
        return best_val, self.build(k, 1, phi0)

    def build(self, kk: int, t: int, phi: tuple[int, ...]) -> BlockTree:
        bt = BlockTree()
        bt.root = self._build_best(bt, kk, t, phi)
        return bt.compact()

    def _leaf(self, bt: BlockTree, kk, t, phi) -> int:
        return bt.add_leaf(State(t, kk, _avail_from_phi(self.part, phi)))

    def _build_best(self, bt: BlockTree, kk, t, phi) -> int:
        val, F = self._best_entry(kk, t, phi)
        if F == 1:
            return self._leaf(bt, kk, t, phi)
        return self._build_path(bt, F, 1, kk, t, phi, self._norm_budget(F, 1, phi, float(self.params[F].budget_units)))

    def _build_path(self, bt: BlockTree, F, f, kk, t, phi, bl) -> int:
        if f == F:
            return self._leaf(bt, kk, t, phi)
        _, choice = self._path_entry(F, f, kk, t, phi, bl)
        if choice is None:
            return self._build_path(bt, F, f + 1, kk, t, phi, bl) if f + 1 < F else self._leaf(bt, kk, t, phi)
        counts, cost, psi_g = choice
        vals = self.mixed.values
        members = [a for m, c in enumerate(counts) for a in self.part.classes[m][phi[m]:phi[m] + c]]
        block = tuple(sorted(members, key=lambda a: (-vals[a], a)))
        psi = rejection_probability(block, self.mixed)
        t2 = t + len(block)
        phi2 = tuple(p + c for p, c in zip(phi, counts))
        right = self._build_best(bt, kk - 1, t2, phi2)
        if f + 1 < F:
            left = self._build_path(bt, F, f + 1, kk, t2, phi2, self._norm_budget(F, f + 1, phi2, bl - cost))
        else:
            left = self._leaf(bt, kk, t2, phi2)
        coin = min(1.0, psi_g / psi) if psi > 0.0 else 0.0
        return bt.add(State(t, kk, _avail_from_phi(self.part, phi)), block, left, right, coin)


def _prefix_sum(vals, start: int, count: int) -> float:
    s = 0.0
    for x in vals[start:start + count]:
        s += x
    return s


# --- the full pipeline -----------------------------------------------------------


@dataclass
class PtasReport:
    regime: str
    eps: float
    threshold: float
    opt_under: float | None = None
    opt_under_source: str = "greedy_dp"
    grid_sizes: dict = field(default_factory=dict)
    candidates_evaluated: int = 0
    best_value_mixed: float = 0.0
    best_value_original: float = 0.0
    bridge_value_mixed: float = 0.0
    guarantee_factor: float = 0.0
    fallback: str | None = None
    partial: bool = False
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PtasResult:
    tree: BlockTree | DecisionTree  # the selected policy (coins kept for ranking)
    bridge_tree: BlockTree | DecisionTree  # what is evaluated under I
    value: float  # R^I of bridge_tree
    value_mixed: float  # R^{I-mixed} of the selected candidate
    report: PtasReport
    rounded: RoundedInstance | None = None


def guarantee_factor(eps: float) -> float:
    return max(0.0, 1.0 - 7.0 * eps) * max(0.0, 1.0 - 2.0 * eps)


def bridge(candidate: BlockTree, ri: RoundedInstance) -> tuple[BlockTree, float, float]:
    """Drop coins, block-canonicalize under I-mixed, evaluate under I."""
    coin_free = candidate.strip_coins()
    canon, _ = canonicalize_block(coin_free, ri.mixed)
    return canon, block_tree_reward(canon, ri.mixed), block_tree_reward(canon, ri.base)


def solve_family(inst: Instance, eps: float, *, cap: int = DEFAULT_CAP, budget_units: int | None = None,
                 F_values=None, ri: RoundedInstance | None = None) -> tuple[FamilySolver, float, BlockTree, RoundedInstance]:
    ri = round_instance(inst, eps) if ri is None else ri
    opt_under = underestimate_opt(ri.mixed)
    solver = FamilySolver(ri.mixed, ri.partition, eps, opt_under, budget_units=budget_units,
                          F_values=F_values, cap=cap)
    if opt_under <= 0.0:
        return solver, 0.0, _root_leaf(ri.mixed), ri
    value, tree = solver.solve()
    return solver, value, tree, ri


def _root_leaf(inst: Instance) -> BlockTree:
    bt = BlockTree()
    bt.add_leaf(inst.root_state())
    return bt


def ptas_solve(inst: Instance, eps: float, *, cap: int = DEFAULT_CAP, budget_units: int | None = None,
               force_family: bool = False) -> PtasResult:
    t0 = time.perf_counter()
    decision = classify_regime(inst, eps)
    report = PtasReport(decision.regime.value, eps, decision.threshold, guarantee_factor=guarantee_factor(eps))
    ri = round_instance(inst, eps)
    if decision.regime == Regime.MANY and not force_family:
        if inst.n <= ORACLE_MAX_N:
            res = optimal_exact(inst)
            tree, report.fallback = res.tree, "exact"
        else:
            _, tree = greedy_dp(inst)
            report.fallback = "greedy_dp"
        report.best_value_original = tree_reward(tree, inst)
        report.best_value_mixed = report.bridge_value_mixed = tree_reward(tree, ri.mixed)
        report.guarantee_factor = many_positions_factor(inst.k)
        report.wall_time = time.perf_counter() - t0
        return PtasResult(tree, tree, report.best_value_original, report.best_value_mixed, report, ri)

    solver, value, cand, ri = solve_family(inst, eps, cap=cap, budget_units=budget_units, ri=ri)
    report.opt_under = solver.opt_under
    report.grid_sizes = {
        str(F): {"budget_units": gp.budget_units, "reject_menu": len(gp.psi_menu), "delta": gp.delta, "mu": gp.mu}
        for F, gp in solver.params.items()
    }
    report.candidates_evaluated = solver.transitions
    report.partial = solver.partial
    report.best_value_mixed = block_tree_reward(cand, ri.mixed)
    canon, bridge_mixed, bridge_orig = bridge(cand, ri)
    report.bridge_value_mixed = bridge_mixed
    report.best_value_original = bridge_orig
    report.wall_time = time.perf_counter() - t0
    return PtasResult(cand, canon, bridge_orig, report.best_value_mixed, report, ri)


# --- instrumented match against a reference block tree ---------------------------


@dataclass
class MatchCheck:
    node: int
    name: str
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs >= self.rhs - 1e-12 * max(1.0, abs(self.rhs))


@dataclass
class MatchReport:
    feasible: bool
    reason: str
    checks: list[MatchCheck]
    matched_value: float | None
    within_budget: bool
    within_F: bool

    @property
    def ok(self) -> bool:
        return self.feasible and all(c.ok for c in self.checks)


def reference_guess_tree(ref: BlockTree, mixed: Instance, partition: ClassPartition, eps: float,
                         opt_under: float, node: int | None = None) -> tuple[GuessTree, bool, bool]:
    """Round a reference tree's true contributions and rejection
    probabilities down onto the grids. Also reports whether every path fits
    its contribution budget and the F range."""
    node = ref.root if node is None else node
    path = [node]
    while not ref.nodes[path[-1]].is_leaf:
        path.append(ref.nodes[path[-1]].left)
    F = len(path)
    gp = grid_params(F, eps, mixed.k, partition, opt_under)
    n_cls = partition.M + 1
    mat = [[0] * F for _ in range(n_cls)]
    rejects = []
    children: dict[int, GuessTree] = {}
    ok_budget = True
    ok_F = F <= max_path_length(eps)
    for f, u in enumerate(path[:-1], start=1):
        nd = ref.nodes[u]
        for m in range(n_cls):
            tot = 0.0
            for a in nd.block:
                if partition.class_of[a] == m:
                    tot += mixed.values[a]
            contrib = partition.class_prob[m] * tot
            if contrib > 0.0:
                mat[m][f - 1] = math.floor(contrib / gp.delta)
        psi = rejection_probability(nd.block, mixed)
        rejects.append(max((x for x in gp.psi_menu if x <= psi), default=gp.psi_menu[0]))
        if not ref.nodes[nd.right].is_leaf:
            child, b2, f2 = reference_guess_tree(ref, mixed, partition, eps, opt_under, nd.right)
            children[f] = child
            ok_budget &= b2
            ok_F &= f2
    ok_budget &= sum(map(sum, mat)) <= gp.budget_units
    gv = GuessVector(F, tuple(tuple(r) for r in mat), tuple(rejects), gp.delta, gp.mu)
    return GuessTree(gv, children), ok_budget, ok_F


def match_reference(ref: BlockTree, mixed: Instance, partition: ClassPartition, eps: float,
                    opt_under: float | None = None) -> MatchReport:
    """Assign the grid-rounded guesses of `ref` and check the feasibility
    conditions node by node."""
    opt_under = underestimate_opt(mixed) if opt_under is None else opt_under
    if opt_under <= 0.0:
        return MatchReport(True, "zero optimum", [], 0.0, True, True)
    gt, ok_budget, ok_F = reference_guess_tree(ref, mixed, partition, eps, opt_under)
    asg = assign_and_build(gt, mixed, partition)
    if not asg.feasible:
        return MatchReport(False, asg.reason, [], None, ok_budget, ok_F)
    checks: list[MatchCheck] = []
    e3 = eps**3
    # walk reference and candidate side by side
    cand = asg.tree
    info = {a.node: a for a in asg.nodes}

    def phi_of(avail: int) -> list[int]:
        return [sum(1 for a in c if not avail >> a & 1) for c in partition.classes]

    def walk(ru: int, cu: int) -> None:
        rn, cn = ref.nodes[ru], cand.nodes[cu]
        if rn.is_leaf or cn.is_leaf:
            return
        a = info[cu]
        phi_ref = phi_of(rn.state.avail)
        for m in range(partition.M + 1):
            checks.append(MatchCheck(cu, f"phi[{m}]", phi_ref[m], a.phi_before[m]))
        after_ref = phi_of(rn.state.avail & ~mask_of(rn.block))
        after_c = [a.phi_before[m] + a.counts[m] for m in range(partition.M + 1)]
        for m in range(partition.M + 1):
            checks.append(MatchCheck(cu, f"phi_after[{m}]", after_ref[m], after_c[m]))
        checks.append(MatchCheck(cu, "psi_guess<=psi_block", a.psi_block, a.psi_guess))
        if len(rn.block) > 1:
            pre = 1.0
            for x in cn.block:
                pre *= 1.0 - mixed.probs[x]
                checks.append(MatchCheck(cu, "prefix_rejection", pre, 1.0 - e3))
        walk(rn.left, cn.left)
        walk(rn.right, cn.right)

    walk(ref.root, cand.root)
    return MatchReport(True, "", checks, block_tree_reward(cand, mixed), ok_budget, ok_F)
