"""Command-line front end.

Exit codes: 0 optimal, 2 infeasible, 3 assumption violation, 4 parse or usage
error, 5 node/iteration/lattice limit hit.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from importlib import resources

from . import bnb, oracle, valfun
from .benders import solve_generalized_benders, solve_lshaped_continuous
from .bnc import solve_bilevel_bnc
from .errors import (AssumptionError, CapExceeded, ContractError, DimensionError, InfeasibleMaster,
                     IterationLimit, MsmilpError, NodeLimit, ParseError, UnboundedBoxError,
                     UnboundedError)
from .export import (ITERATION_HEADER, cut_rows, iteration_rows, qd, qv, result_json, write_csv)
from .model import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SolveResult, parse_instance
from .rational import INF, fmt_dec, fmt_q
from .risk import OPTIMISTIC, PESSIMISTIC

EXIT_OK, EXIT_INFEASIBLE, EXIT_ASSUMPTION, EXIT_USAGE, EXIT_LIMIT = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_instance_text(path: str) -> str:
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    name = os.path.basename(path)
    if not name.endswith(".json"):
        name += ".json"
    bundled = resources.files("msmilp") / "instances" / name
    if bundled.is_file():
        return bundled.read_text(encoding="utf-8")
    raise UsageError(f"no such instance file: {path}")


def _load(path, **kw):
    return parse_instance(_read_instance_text(path), **kw)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _vector(text: str) -> tuple:
    try:
        return tuple(Fraction(t) for t in text.split(","))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a comma-separated rational vector: {text!r}") from None


# --- solve ----------------------------------------------------------------------

def _oracle_result(inst, mode, cap) -> SolveResult:
    rep = oracle.oracle_solve(inst, mode, cap=cap)
    if rep.optimum is None:
        return SolveResult(INFEASIBLE, algorithm="enumerate")
    x, val = rep.optimum
    return SolveResult(OPTIMAL, x_star=x, x_original=inst.original_x(x), reactions=rep.reactions[x],
                       objective=val, reported_objective=inst.report(val), algorithm="enumerate")


def cmd_solve(args) -> int:
    if args.mode == "pessimistic" and args.algorithm != "enumerate":
        raise UsageError("pessimistic mode is available with --algorithm enumerate only")
    inst = _load(args.instance, allow_continuous_linking=args.algorithm == "lshaped")
    mode = OPTIMISTIC if args.mode == "optimistic" else PESSIMISTIC
    if args.algorithm == "benders":
        res = solve_generalized_benders(inst, max_iter=args.max_iter, node_limit=args.node_limit,
                                        auto_binarize=True)
    elif args.algorithm == "lshaped":
        res = solve_lshaped_continuous(inst, max_iter=args.max_iter, node_limit=args.node_limit)
    elif args.algorithm == "bnc":
        res = solve_bilevel_bnc(inst, node_limit=args.node_limit)
    else:
        res = _oracle_result(inst, mode, args.lattice_cap)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "result.json"), "w", encoding="utf-8") as fh:
            fh.write(result_json(res))
        write_csv(os.path.join(args.out, "iterations.csv"), ITERATION_HEADER, iteration_rows(res))
        header, rows = cut_rows(res)
        write_csv(os.path.join(args.out, "cuts.csv"), header, rows)
    print(f"status: {res.status}")
    if res.reported_objective is not None:
        print(f"objective: {fmt_q(res.reported_objective)} ({fmt_dec(res.reported_objective)})")
    if res.x_star is not None:
        x = res.x_original if res.x_original is not None else res.x_star
        print("x: " + " ".join(fmt_q(v) for v in x))
    if res.iterations:
        print(f"iterations: {res.iterations}")
    if res.message:
        print(res.message)
    return {OPTIMAL: EXIT_OK, INFEASIBLE: EXIT_INFEASIBLE, ITERATION_LIMIT: EXIT_LIMIT}.get(
        res.status, EXIT_ASSUMPTION)


# --- value functions ------------------------------------------------------------

def _grid(a, b, step):
    if step <= 0:
        raise UsageError("--step must be positive")
    if b < a:
        raise UsageError("--to must not be smaller than --from")
    out, v = [], a
    while v <= b:
        out.append(v)
        v += step
    return out


def _out_csv(path, header, rows):
    if path:
        write_csv(path, header, rows)
    else:
        from .export import csv_text
        sys.stdout.write(csv_text(header, rows))


def cmd_vf(args) -> int:
    inst = _load(args.instance, allow_continuous_linking=True)
    ss = inst.second_stage
    if args.vf_command == "sample":
        if ss.m_orig != 1:
            raise AssumptionError("vf sample works on single-row second stages")
        grid = _grid(args.from_, args.to, args.step)
        approx = valfun.ValueFunctionApprox(ss, node_limit=args.node_limit)
        for b in args.strong or []:
            approx.add_point(b)
        rows = []
        for b in grid:
            phi = valfun.eval_phi(ss, b, node_limit=args.node_limit)
            phi_c = valfun.eval_phi_C(ss, b)
            phi_i = valfun.eval_phi_I(ss, b, node_limit=args.node_limit)
            lo, hi = valfun.sandwich_eval(approx, b)
            rows.append(qd(b) + qd(phi) + qd(phi_c) + qd(phi_i) + qd(lo) + qd(hi))
        header = []
        for col in ("beta", "phi", "phi_C", "phi_I", "lower", "upper"):
            header += [col, col + "_dec"]
        _out_csv(args.out, header, rows)
        return EXIT_OK
    if args.vf_command == "construct1d":
        vf = valfun.construct_vf_1row(ss)
        rows = [["breakpoint"] + qd(b) + qd(v) + ["", "", ""] for b, v in vf.breakpoints]
        for a, b, slope, icpt in vf.segments:
            rows.append(["segment"] + qd(a) + qd(b) + [fmt_q(slope) if slope is not None else "inf",
                                                     fmt_q(icpt) if icpt is not None else "inf",
                                                     ""])
        for yI, cost, shift in vf.generators:
            rows.append(["generator", qv(yI), "", fmt_q(cost), fmt_q(shift), "", "", ""])
        header = ["kind", "a", "a_dec", "b", "b_dec", "slope", "intercept", "unused"]
        _out_csv(args.out, header, rows)
        return EXIT_OK
    # dualfn
    if not args.at:
        raise UsageError("vf dualfn needs at least one --at right-hand side")
    tree = bnb.new_tree(ss.d2, ss.G, ss.lower, ss.upper, ss.r, node_limit=args.node_limit)
    for beta in args.at:
        bnb.refine_tree(tree, ss.expand(beta if len(beta) > 1 else beta[0]))
    mode = bnb.PATH_MIN if args.fn_mode == "path" else bnb.LEAF_MIN
    F = bnb.extract_dual_function(tree, mode).collapse(ss.row_map, ss.m_orig)
    header = ["group", "piece", "mode", "const"] + [f"slope_{i + 1}" for i in range(ss.m_orig)]
    _out_csv(args.out, header, bnb.dual_function_rows(F))
    if args.tree_out:
        with open(args.tree_out, "w", encoding="utf-8") as fh:
            fh.write(bnb.tree_to_json(tree))
    return EXIT_OK


# --- oracle and crosscheck ------------------------------------------------------

def cmd_oracle(args) -> int:
    inst = _load(args.instance)
    mode = OPTIMISTIC if args.mode == "optimistic" else PESSIMISTIC
    rep = oracle.oracle_solve(inst, mode, cap=args.lattice_cap)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "xi.csv"), ["x", "xi", "xi_dec"],
                  [[qv(x)] + qd(v) for x, v in sorted(rep.xi.items())])
        write_csv(os.path.join(args.out, "phi.csv"), ["scenario", "beta", "phi", "phi_dec"],
                  [[w, qv(b)] + qd(v) for (w, b), v in sorted(rep.phi.items())])
    print(f"status: {rep.status}")
    if rep.optimum:
        print(f"objective: {fmt_q(rep.reported_value)} ({fmt_dec(rep.reported_value)})")
        print("x: " + " ".join(fmt_q(v) for v in inst.original_x(rep.optimum[0])))
        print(f"feasible first-stage points: {len(rep.feasible_x_set)}")
    return EXIT_OK if rep.optimum else EXIT_INFEASIBLE


def _value(result: SolveResult):
    return result.objective if result.status == OPTIMAL else INF


def cmd_crosscheck(args) -> int:
    rows, bad = [], 0
    for k in range(args.count):
        seed = args.seed + k
        inst = oracle.random_instance(seed, n1=args.n1, n2=args.n2, m2=args.m2,
                                      scenarios=args.scenarios, zero_sum=True, binary_x=True)
        ref = oracle.oracle_solve(inst, cap=args.lattice_cap).value
        a = _value(solve_bilevel_bnc(inst, node_limit=args.node_limit))
        b = _value(solve_generalized_benders(inst, node_limit=args.node_limit, max_iter=args.max_iter))
        ok = a == b == ref
        bad += not ok
        rows.append([seed] + qd(ref) + qd(a) + qd(b) + ["ok" if ok else "MISMATCH"])
    header = ["seed", "oracle", "oracle_dec", "bnc", "bnc_dec", "benders", "benders_dec", "agree"]
    _out_csv(args.out, header, rows)
    print(f"{args.count - bad}/{args.count} instances agree", file=sys.stderr)
    return EXIT_OK if bad == 0 else 1


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msmilp", description="Exact two-stage mixed integer linear optimization.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def limits(sp):
        sp.add_argument("--node-limit", type=int, default=bnb.DEFAULT_NODE_LIMIT,
                        help="branch-and-bound node cap (default %(default)s)")
        sp.add_argument("--lattice-cap", type=int, default=oracle.DEFAULT_CAP,
                        help="enumeration cap for the oracle (default %(default)s)")

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--algorithm", choices=["benders", "bnc", "enumerate", "lshaped"], default="benders",
                   help="solver (default %(default)s)")
    s.add_argument("--mode", choices=["optimistic", "pessimistic"], default="optimistic",
                   help="pessimistic needs --algorithm enumerate")
    s.add_argument("--max-iter", type=int, default=200, help="Benders iteration cap (default %(default)s)")
    s.add_argument("--out", help="directory for result.json, iterations.csv and cuts.csv")
    s.add_argument("--seed", type=int, default=0, help="unused by the exact solvers; recorded for runs")
    limits(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("vf", help="value-function tools")
    vsub = v.add_subparsers(dest="vf_command", required=True, parser_class=_Parser)
    vs = vsub.add_parser("sample", help="tabulate phi, phi_C, phi_I and the sandwich on a grid")
    vs.add_argument("instance")
    vs.add_argument("--from", dest="from_", type=_rational, required=True)
    vs.add_argument("--to", type=_rational, required=True)
    vs.add_argument("--step", type=_rational, required=True)
    vs.add_argument("--strong", type=_rational, action="append",
                    help="right-hand side where the sandwich is made exact (repeatable)")
    vs.add_argument("--out", help="CSV path (default stdout)")
    vc = vsub.add_parser("construct1d", help="exact piecewise description for one row")
    vc.add_argument("instance")
    vc.add_argument("--out")
    vd = vsub.add_parser("dualfn", help="dual function of a branch-and-bound tree")
    vd.add_argument("instance")
    vd.add_argument("--at", type=_vector, action="append",
                    help="right-hand side (comma separated) to make the tree strong at; repeatable")
    vd.add_argument("--fn-mode", choices=["leaf", "path"], default="path",
                    help="leaf minimum or path-strengthened function (default %(default)s)")
    vd.add_argument("--tree-out", help="write the tree snapshot here")
    vd.add_argument("--out")
    for sp in (vs, vc, vd):
        sp.add_argument("--node-limit", type=int, default=bnb.DEFAULT_NODE_LIMIT)
    v.set_defaults(func=cmd_vf)

    o = sub.add_parser("oracle", help="brute-force reference solution")
    o.add_argument("instance")
    o.add_argument("--mode", choices=["optimistic", "pessimistic"], default="optimistic",
                   help="tie-breaking over follower optima (default %(default)s)")
    o.add_argument("--out", help="directory for xi.csv and phi.csv")
    limits(o)
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("crosscheck", help="compare solvers on random zero-sum binary instances")
    c.add_argument("--seed", type=int, default=0, help="first seed (default %(default)s)")
    c.add_argument("--count", type=int, default=100, help="number of instances (default %(default)s)")
    c.add_argument("--n1", type=int, default=3, help="first-stage binaries (default %(default)s)")
    c.add_argument("--n2", type=int, default=3, help="second-stage integers (default %(default)s)")
    c.add_argument("--m2", type=int, default=2, help="second-stage rows (default %(default)s)")
    c.add_argument("--scenarios", type=int, default=1, help="scenarios per instance (default %(default)s)")
    c.add_argument("--max-iter", type=int, default=200, help="Benders iteration cap (default %(default)s)")
    c.add_argument("--out", help="CSV path (default stdout)")
    limits(c)
    c.set_defaults(func=cmd_crosscheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DimensionError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionError, UnboundedBoxError, UnboundedError, ContractError) as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except InfeasibleMaster as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NodeLimit, IterationLimit, CapExceeded) as exc:
        print(f"limit reached: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except MsmilpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
