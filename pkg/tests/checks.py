"""Checks shared by the property suite and the acceptance report."""

import itertools
import random
from fractions import Fraction as Q

from msmilp import bnb
from msmilp.benders import (DisjunctiveFarkasCut, DualFnCut, FarkasCut, IntegerLShapedCut, LinearCut,
                            NoGoodCut, solve_generalized_benders)
from msmilp.bnc import solve_bilevel_bnc
from msmilp.model import OPTIMAL, SecondStage
from msmilp.oracle import oracle_phi, oracle_solve, random_instance
from msmilp.rational import INF, dot
from msmilp.valfun import ValueFunctionApprox, sandwich_eval


def random_stage(seed, *, positive_costs=False, ub=None):
    """Small second stage with ``>=`` rows; the last column is continuous on odd seeds."""
    rng = random.Random(seed)
    n, m = rng.randint(2, 3), rng.randint(1, 2)
    r = n - 1 if seed % 2 else n
    d = [rng.randint(1, 6) if positive_costs else rng.randint(-3, 6) for _ in range(n)]
    G = [[rng.randint(-3, 5) for _ in range(n)] for _ in range(m)]
    for row in G:
        if max(row) <= 0:
            row[rng.randrange(n)] = rng.randint(1, 5)
    upper = [ub if ub is not None else rng.randint(1, 3) for _ in range(n)]
    if seed % 2 and positive_costs:
        upper[-1] = None
    return SecondStage.from_rows(d, G, r=r, upper=upper)


def grid(m):
    if m == 1:
        return [(Q(k, 2),) for k in range(-12, 13)]
    axis = [Q(-4), Q(-3, 2), Q(0), Q(3, 2), Q(4)]
    return list(itertools.product(axis, repeat=2))


def weak_duality(seed):
    """Every extracted dual function stays below the oracle on the grid; strong where logged."""
    ss = random_stage(seed)
    pts = grid(ss.m_orig)
    assert len(pts) == 25
    phi = {b: oracle_phi(ss, b) for b in pts}
    rng = random.Random(seed)
    tree = bnb.new_tree(ss.d2, ss.G, ss.lower, ss.upper, ss.r)
    logged = []
    for b in rng.sample(pts, 3):
        bnb.refine_tree(tree, ss.expand(b))
        logged.append(b)
        leaf = bnb.extract_dual_function(tree, bnb.LEAF_MIN).collapse(ss.row_map, ss.m_orig)
        path = bnb.extract_dual_function(tree, bnb.PATH_MIN).collapse(ss.row_map, ss.m_orig)
        for F in (leaf, path):
            for p in pts:
                if F(p) > phi[p]:
                    return False
        if phi[b] != INF and leaf(b) != phi[b]:
            return False
        if any(phi[p] != INF and path(p) != phi[p] for p in logged):
            return False
    return True


def sandwich(seed):
    ss = random_stage(seed)
    pts = grid(ss.m_orig)
    approx = ValueFunctionApprox(ss)
    rng = random.Random(seed + 1000)
    for b in rng.sample(pts, 3):
        approx.add_point(b)
    for p in pts:
        lo, hi = sandwich_eval(approx, p)
        if not lo <= oracle_phi(ss, p) <= hi:
            return False
    for p in approx.strong_points:
        lo, hi = sandwich_eval(approx, p)
        if not lo == oracle_phi(ss, p) == hi:
            return False
    return True


def crosscheck_instance(seed):
    return random_instance(seed, n1=3, n2=3, m2=2, scenarios=1 + seed % 2, zero_sum=True)


def _value(res):
    return res.objective if res.status == OPTIMAL else INF


def scenario_xi(inst, rep, x, w):
    return dot(inst.d1, rep.reactions[x][w])


def benders_cut_holds(inst, w, cut, x, xi_w):
    beta = inst.beta(w, x)
    if isinstance(cut, LinearCut):
        return dot(cut.u, beta) + cut.const <= xi_w
    if isinstance(cut, DualFnCut):
        return cut.F(beta) <= xi_w
    if isinstance(cut, IntegerLShapedCut):
        return cut.bound(x) <= xi_w
    if isinstance(cut, NoGoodCut):
        return tuple(x[j] for j in cut.columns) != cut.x_ref
    if isinstance(cut, FarkasCut):
        return dot(cut.ray, beta) + cut.const <= 0
    if isinstance(cut, DisjunctiveFarkasCut):
        return any(dot(r, beta) + c <= 0 for r, c in cut.terms)
    raise TypeError(cut)


def bnc_cut_holds(inst, rep, c):
    """A logged bnc cut keeps every bilevel-feasible lattice point of its node."""
    coef = tuple(c["f"]) + tuple(c["g"])
    if dot(coef, c["separated_vertex"]) <= c["rhs"]:
        return False
    w, n1, n2 = c["scenario"], inst.n1, inst.n2
    lo, hi = c["node_lower"], c["node_upper"]
    ylo, yhi = lo[n1 + w * n2:n1 + (w + 1) * n2], hi[n1 + w * n2:n1 + (w + 1) * n2]
    ss = inst.second_stage
    box = [range(int(a), int(b) + 1) for a, b in zip(ss.lower, ss.upper)]
    for x in itertools.product(*[range(int(lo[j]), int(hi[j]) + 1) for j in range(n1)]):
        x = tuple(Q(v) for v in x)
        if not inst.first_stage_feasible(x):
            continue
        phi = rep.phi.get((w, inst.beta(w, x)))
        if phi is None or phi == INF:
            continue
        beta = inst.beta(w, x)
        for y in itertools.product(*box):
            if not all(a <= v <= b for a, v, b in zip(ylo, y, yhi)):
                continue
            if dot(ss.d2, y) == phi and all(dot(row, y) >= b for row, b in zip(ss.G, beta)):
                if dot(coef, x + y) > c["rhs"]:
                    return False
    return True


def cross_method(seed):
    """``(agree, cuts_valid, n_cuts)`` for one random zero-sum binary instance."""
    inst = crosscheck_instance(seed)
    rep = oracle_solve(inst)
    a = solve_bilevel_bnc(inst)
    b = solve_generalized_benders(inst)
    agree = _value(a) == _value(b) == rep.value
    valid = all(bnc_cut_holds(inst, rep, c) for c in a.cut_log)
    for rec in b.cut_log:
        w = rec["scenario"]
        for x in rep.feasible_x_set:
            if not benders_cut_holds(inst, w, rec["cut"], x, scenario_xi(inst, rep, x, w)):
                valid = False
    return agree, valid, len(a.cut_log) + len(b.cut_log)
