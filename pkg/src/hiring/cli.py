"""Command-line entry point: gen, solve, compare, audit.

Exit codes: 0 ok, 1 usage, 2 solver refusal, 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from .blockpolicy import BlockBuildError, BlockTree, block_tree_reward, build_block_tree, rejection_probability
from .canonical import canonicalize, canonicalize_block
from .core import DecisionTree, Instance, subtree_rewards, tree_reward, validate_tree
from .exact import ORACLE_MAX_N, OracleRefused, greedy_dp, optimal_exact
from .ptas import GridBudgetError, ptas_solve, solve_family
from .qptas import qptas
from .rounding import RoundingError, round_instance
from .simulate import simulate

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_AUDIT = 0, 1, 2, 3
SOLVERS = ("exact", "greedy", "qptas", "ptas")
AUDIT_COLUMNS = ("name", "lhs", "rhs", "slack", "pass")
COMPARE_COLUMNS = ("solver", "eps", "value", "value_mixed", "oracle", "ratio", "mc_mean", "mc_stderr", "wall_time")
AUDIT_RTOL = 1e-9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default, which is taken by refusals
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_instance(path: str) -> Instance:
    try:
        return Instance.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load instance {path}: {exc}") from exc


# --- gen -------------------------------------------------------------------------


def _parse_dist(spec: str, what: str):
    parts = spec.split()
    try:
        if parts[0] == "uniform" and len(parts) == 3:
            lo, hi = float(parts[1]), float(parts[2])
            if lo > hi:
                raise ValueError
            return lambda rng, n: rng.uniform(lo, hi, n)
        if parts[0] == "point" and len(parts) == 2:
            x = float(parts[1])
            return lambda rng, n: np.full(n, x)
    except (ValueError, IndexError):
        pass
    raise UsageError(f"bad {what} distribution {spec!r}; use 'uniform LO HI' or 'point X'")


def generate(n: int, k: int, T: int, values: str = "uniform 0 1", probs: str = "uniform 0 1", seed: int = 0) -> Instance:
    if n < 1:
        raise UsageError("n must be at least 1")
    if k < 1 or T < 1:
        raise UsageError("k and T must be at least 1")
    vd, pd = _parse_dist(values, "value"), _parse_dist(probs, "probability")
    rng = np.random.default_rng(seed)
    vs = [float(x) for x in vd(rng, n)]
    ps = [float(x) for x in pd(rng, n)]
    try:
        return Instance.from_dict({"values": vs, "probs": ps, "k": k, "T": T})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_gen(args) -> int:
    inst = generate(args.n, args.k, args.T, args.values, args.probs, args.seed)
    _emit(inst.to_json() + "\n", args.out)
    return EXIT_OK


# --- solve -----------------------------------------------------------------------


def _policy_json(policy) -> dict:
    kind = "block" if isinstance(policy, BlockTree) else "tree"
    return {"kind": kind, "nodes": policy.to_json_obj()}


def run_solver(inst: Instance, solver: str, eps: float | None, budget: int) -> dict:
    """Solve and return a JSON-ready record; raises OracleRefused, RoundingError,
    or GridBudgetError on refusal."""
    t0 = time.perf_counter()
    rec: dict = {"solver": solver, "eps": eps}
    if solver in ("qptas", "ptas") and eps is None:
        raise UsageError(f"--eps is required for solver {solver}")
    if solver == "exact":
        res = optimal_exact(inst)
        policy, rec["value"] = res.tree, res.value
    elif solver == "greedy":
        gv, policy = greedy_dp(inst)
        rec["value"] = tree_reward(policy, inst)
        rec["greedy_value"] = gv
    elif solver == "qptas":
        fval, policy, ri = qptas(inst, eps)
        rec["value"] = tree_reward(policy, inst)
        rec["value_mixed"] = fval
    elif solver == "ptas":
        res = ptas_solve(inst, eps, cap=budget)
        policy = res.bridge_tree
        rec["value"] = res.value
        rec["value_mixed"] = res.value_mixed
        rep = res.report.to_dict()
        rep.pop("wall_time")
        rec["report"] = rep
        rec["candidate"] = _policy_json(res.tree)
    else:
        raise UsageError(f"unknown solver {solver}")
    rec["policy"] = _policy_json(policy)
    if inst.n <= ORACLE_MAX_N:
        opt = optimal_exact(inst).value if solver != "exact" else rec["value"]
        rec["oracle_value"] = opt
        rec["ratio"] = rec["value"] / opt if opt > 0 else 1.0
    rec["wall_time"] = time.perf_counter() - t0
    rec["_policy_obj"] = policy
    return rec


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    rec = run_solver(inst, args.solver, args.eps, args.budget)
    rec.pop("_policy_obj")
    _emit(json.dumps(rec, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


# --- compare ---------------------------------------------------------------------


def cmd_compare(args) -> int:
    inst = _load_instance(args.instance)
    solvers = args.solver or list(SOLVERS)
    eps_list = args.eps or [0.5]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for solver in solvers:
        for eps in eps_list if solver in ("qptas", "ptas") else [None]:
            rec = run_solver(inst, solver, eps, args.budget)
            mc_mean = mc_se = None
            if args.trials > 0:
                sim_inst = inst
                rep = simulate(rec["_policy_obj"], sim_inst, args.trials, args.seed)
                mc_mean, mc_se = rep.mean_reward, rep.std_error
            w.writerow([fmt(x) for x in (solver, eps, rec["value"], rec.get("value_mixed"), rec.get("oracle_value"),
                                         rec.get("ratio"), mc_mean, mc_se, rec["wall_time"])])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# --- audit -----------------------------------------------------------------------


def canonical_margin(tree: DecisionTree, inst: Instance) -> float:
    """Smallest of R_L - R_R and v + R_R - R_L over internal nodes (0 for a leaf)."""
    R = subtree_rewards(tree, inst)
    worst = 0.0
    first = True
    for u in tree.reachable():
        nd = tree.nodes[u]
        if nd.is_leaf:
            continue
        rl, rr = R[nd.left], R[nd.right]
        m = min(rl - rr, inst.values[nd.app] + rr - rl)
        worst = m if first else min(worst, m)
        first = False
    return worst


class Audit:
    def __init__(self):
        self.rows: list[tuple[str, float, float, float, bool]] = []

    def add(self, name: str, lhs: float, rhs: float) -> None:
        slack = lhs - rhs
        ok = slack >= -AUDIT_RTOL * max(1.0, abs(lhs), abs(rhs))
        self.rows.append((name, float(lhs), float(rhs), float(slack), ok))

    @property
    def ok(self) -> bool:
        return all(r[4] for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AUDIT_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(x) for x in r])
        return buf.getvalue()


def run_audit(inst: Instance, eps: float, trials: int, seed: int, budget: int,
              injected: DecisionTree | None = None) -> Audit:
    au = Audit()
    opt_res = optimal_exact(inst)
    opt = opt_res.value
    H = opt_res.tree if injected is None else injected

    au.add("input_valid", 0.0 if validate_tree(H, inst) else 1.0, 1.0)
    au.add("input_canonical", canonical_margin(H, inst), 0.0)
    Hc, rep = canonicalize(H, inst)
    au.add("canonicalize_monotone", rep.reward_after, rep.reward_before)
    au.add("canonical_output", canonical_margin(Hc, inst), 0.0)

    ri = round_instance(inst, eps)
    au.add("round_down_loss", tree_reward(Hc, ri.mixed), (1.0 - 2.0 * eps) * tree_reward(Hc, inst))
    fval, Hq, _ = qptas(inst, eps)
    au.add("qptas_canonical", canonical_margin(Hq, ri.mixed), 0.0)
    au.add("round_up_gain", tree_reward(Hq, inst), tree_reward(Hq, ri.mixed))
    au.add("qptas_vs_oracle", tree_reward(Hq, inst), (1.0 - 2.0 * eps) * opt)

    try:
        bt, brep = build_block_tree(Hq, ri.mixed, eps, ri.partition, check_monotone=False)
    except BlockBuildError:
        au.add("block_build", 0.0, 1.0)
    else:
        b_val = block_tree_reward(bt, ri.mixed)
        au.add("block_depth", float(inst.k * brep.max_F), float(bt.depth()))
        psis = [rejection_probability(bt.nodes[u].block, ri.mixed) for u in bt.reachable()
                if len(bt.nodes[u].block) > 1]
        au.add("block_rejection_floor", min(psis, default=1.0), 1.0 - eps**3)
        au.add("block_construction_loss", b_val, (1.0 - 4.0 * eps**3 * inst.k) * fval)
        bc, brep2 = canonicalize_block(bt, ri.mixed)
        au.add("block_canonicalize_monotone", brep2.reward_after, brep2.reward_before)
        au.add("block_mixed_to_original", block_tree_reward(bc, inst), block_tree_reward(bc, ri.mixed))

    solver, fam_val, _, _ = solve_family(inst, eps, cap=budget, ri=ri)
    if ri.mixed.n <= ORACLE_MAX_N:
        opt_mixed = optimal_exact(ri.mixed).value
        au.add("candidate_family_quality", fam_val, (1.0 - 7.0 * eps) * opt_mixed)

    if trials > 0:
        sim = simulate(H, inst, trials, seed)
        au.add("mc_calibration", 4.0 * sim.std_error, abs(sim.mean_reward - tree_reward(H, inst)))
    return au


def cmd_audit(args) -> int:
    inst = _load_instance(args.instance)
    injected = None
    if args.inject:
        try:
            injected = DecisionTree.from_json_obj(json.loads(Path(args.inject).read_text()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load injected tree {args.inject}: {exc}") from exc
    au = run_audit(inst, args.eps, args.trials, args.seed, args.budget, injected)
    _emit(au.to_csv(), args.out)
    return EXIT_OK if au.ok else EXIT_AUDIT


# --- wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hiring", description="Sequential hiring solvers and audits.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, trials_default=0):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=trials_default)
        sp.add_argument("--budget", type=int, default=10**7, help="PTAS transition cap")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")

    g = sub.add_parser("gen", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--T", type=int, required=True)
    g.add_argument("--values", default="uniform 0 1")
    g.add_argument("--probs", default="uniform 0 1")
    common(g)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--solver", choices=SOLVERS, default="exact")
    s.add_argument("--eps", type=float, default=None)
    common(s)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="run several solvers, emit CSV")
    c.add_argument("instance")
    c.add_argument("--solver", choices=SOLVERS, action="append")
    c.add_argument("--eps", type=float, action="append")
    common(c, trials_default=10000)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("audit", help="check the structural inequalities, emit CSV")
    a.add_argument("instance")
    a.add_argument("--eps", type=float, default=0.5)
    a.add_argument("--inject", default=None, help="tree JSON to audit instead of the optimal tree")
    common(a, trials_default=20000)
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    eps = getattr(args, "eps", None)
    for e in eps if isinstance(eps, list) else [eps]:
        if e is not None and not e > 0.0:
            parser.error("--eps must be positive")
    if getattr(args, "trials", 0) < 0:
        parser.error("--trials must be non-negative")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hiring: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OracleRefused, RoundingError, GridBudgetError) as exc:
        print(f"hiring: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    raise SystemExit(main())
