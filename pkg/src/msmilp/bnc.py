"""Branch and cut for pure-integer two-stage problems.

The relaxation drops the value-function constraints and keeps, for every
scenario, a copy ``y^w`` of the second-stage variables.  An integral LP
vertex whose ``y^w`` is not an optimal reaction is cut off with an
inequality ``f x + g y^w <= gamma - 1``, where ``f x + g y^w = gamma`` is a
hyperplane touching the node polyhedron only at the vertex.  Cuts are local
to the node where they are generated and inherited by its children.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import bnb
from .errors import AssumptionError, DegenerateVertexError, IterationLimit, NodeLimit
from .model import INFEASIBLE, OPTIMAL, SolveResult, TwoStageInstance
from .rational import INF, ZERO, dot
from .ratlp import LpOptimal, LpProblem, solve_lp
from .risk import OPTIMISTIC, all_reactions, xi_from_reactions

DEFAULT_CUT_LIMIT = 20000


@dataclass(frozen=True)
class BncCut:
    """``f.x + g.y^scenario <= rhs`` (``rhs = gamma - 1``)."""

    scenario: int
    f: tuple
    g: tuple
    rhs: int
    vertex: tuple  # separated (x, y^scenario)


@dataclass
class BncNode:
    id: int
    lower: tuple
    upper: tuple
    cuts: list = field(default_factory=list)
    lp_value: object = None
    status: str = "Open"
    depth: int = 0


@dataclass(frozen=True)
class Feasible:
    xi: object


@dataclass(frozen=True)
class Infeasible:
    violating: tuple


# --- joint relaxation ------------------------------------------------------------------

def _require_pure_integer(inst: TwoStageInstance):
    if inst.r1 != inst.n1 or inst.r2 != inst.n2:
        raise AssumptionError("branch and cut needs all first- and second-stage variables integer")
    for v in inst.x_ub + inst.y_ub:
        if v == INF:
            raise AssumptionError("branch and cut needs finite bounds on every variable")


def _layout(inst):
    n1, n2, S = inst.n1, inst.n2, len(inst.scenarios)
    return n1, n2, S, n1 + S * n2


def root_bounds(inst: TwoStageInstance):
    S = len(inst.scenarios)
    return inst.x_lb + inst.y_lb * S, inst.x_ub + inst.y_ub * S


def joint_problem(inst: TwoStageInstance, lower, upper, cuts) -> LpProblem:
    n1, n2, S, N = _layout(inst)
    d = list(inst.c)
    for s in inst.scenarios:
        d.extend(s.p * a for a in inst.d1)
    G, rhs = [], []
    for row, b in zip(inst.A1, inst.b1):
        G.append(tuple(row) + (ZERO,) * (S * n2))
        rhs.append(b)
    for w, s in enumerate(inst.scenarios):
        for a, g, b in zip(s.A2, inst.G2, s.b2):
            G.append(tuple(a) + (ZERO,) * (w * n2) + tuple(g) + (ZERO,) * ((S - w - 1) * n2))
            rhs.append(b)
    for cut in cuts:
        w = cut.scenario
        G.append(tuple(-a for a in cut.f) + (ZERO,) * (w * n2) + tuple(-a for a in cut.g)
                 + (ZERO,) * ((S - w - 1) * n2))
        rhs.append(Fraction(-cut.rhs))
    return LpProblem(tuple(d), tuple(G), tuple(rhs), tuple(lower), tuple(upper))


def split_point(inst, v):
    n1, n2, S, _ = _layout(inst)
    x = tuple(v[:n1])
    ys = [tuple(v[n1 + w * n2:n1 + (w + 1) * n2]) for w in range(S)]
    return x, ys


def root_relaxation(inst: TwoStageInstance):
    """LP relaxation vertex at the root as ``(x, [y^w])``, or ``None`` if infeasible."""
    lower, upper = root_bounds(inst)
    res = solve_lp(joint_problem(inst, lower, upper, []), lexmin=True)
    if not isinstance(res, LpOptimal):
        return None
    return split_point(inst, res.y)


# --- feasibility check and cut generation ---------------------------------------------

def check_bilevel_feasible(inst: TwoStageInstance, x_hat, y_hat, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """``Feasible(Xi(x_hat))`` when every ``y_hat[w]`` is an optimal reaction, else the violators."""
    ss = inst.second_stage
    bad = []
    for w in range(len(inst.scenarios)):
        phi = bnb.solve_milp(ss.d2, ss.G, inst.beta(w, x_hat), ss.lower, ss.upper, ss.r,
                             node_limit=node_limit).value
        if dot(ss.d2, y_hat[w]) > phi:
            bad.append(w)
    if bad:
        return Infeasible(tuple(bad))
    reacts = all_reactions(inst, x_hat, OPTIMISTIC, node_limit=node_limit)
    return Feasible(xi_from_reactions(inst, reacts))


def _integer_normal(row):
    den = 1
    for a in row:
        den = den * a.denominator // math.gcd(den, a.denominator)
    return [int(a * den) for a in row]


def _rank(rows, n) -> int:
    mat = [[Fraction(a) for a in r] for r in rows]
    rank = 0
    for col in range(n):
        piv = next((i for i in range(rank, len(mat)) if mat[i][col]), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        p = mat[rank]
        for i in range(len(mat)):
            if i != rank and mat[i][col]:
                f = mat[i][col] / p[col]
                mat[i] = [a - f * b for a, b in zip(mat[i], p)]
        rank += 1
        if rank == len(mat):
            break
    return rank


def scenario_rows(inst: TwoStageInstance, omega: int, cuts):
    """The ``<=``-form rows of scenario ``omega``'s system in ``(x, y)`` space."""
    s = inst.scenarios[omega]
    rows = []
    for row, b in zip(inst.A1, inst.b1):
        rows.append((tuple(-a for a in row) + (ZERO,) * inst.n2, -b))
    for a, g, b in zip(s.A2, inst.G2, s.b2):
        rows.append((tuple(-v for v in a) + tuple(-v for v in g), -b))
    for cut in cuts:
        if cut.scenario == omega:
            rows.append((tuple(Fraction(v) for v in cut.f + cut.g), Fraction(cut.rhs)))
    return rows


def generate_nogood_cut(inst: TwoStageInstance, omega: int, vertex, lower, upper, cuts=()) -> BncCut:
    """Cut ``f x + g y <= gamma - 1`` removing the integral vertex ``(x, y^omega)``.

    ``(f, g)`` sums the integer-scaled normals of the active rows; active
    bounds join only when the rows alone do not pin the vertex down.
    """
    x, y = vertex
    v = tuple(Fraction(a) for a in tuple(x) + tuple(y))
    n = len(v)
    active = [_integer_normal(a) for a, b in scenario_rows(inst, omega, cuts) if dot(a, v) == b]
    if _rank(active, n) < n:
        n1 = inst.n1
        lo = tuple(lower[:n1]) + tuple(lower[n1 + omega * inst.n2:n1 + (omega + 1) * inst.n2])
        hi = tuple(upper[:n1]) + tuple(upper[n1 + omega * inst.n2:n1 + (omega + 1) * inst.n2])
        for j in range(n):
            if v[j] == hi[j]:
                active.append([1 if k == j else 0 for k in range(n)])
            if v[j] == lo[j]:
                active.append([-1 if k == j else 0 for k in range(n)])
        if _rank(active, n) < n:
            raise DegenerateVertexError("active constraints do not support the vertex uniquely")
    normal = [sum(col) for col in zip(*active)]
    g = 0
    for a in normal:
        g = math.gcd(g, a)
    if g == 0:
        g = 1  # the node polyhedron is the vertex itself
    normal = [a // g for a in normal]
    gamma = dot(normal, v)
    return BncCut(omega, tuple(normal[:inst.n1]), tuple(normal[inst.n1:]), int(gamma) - 1,
                  tuple(v))


# --- the search -----------------------------------------------------------------------

def _fractional(v):
    best, gap = None, None
    half = Fraction(1, 2)
    for j, a in enumerate(v):
        f = a - math.floor(a)
        if f and (gap is None or abs(f - half) < gap):
            best, gap = j, abs(f - half)
    return best


def solve_bilevel_bnc(inst: TwoStageInstance, *, node_limit=bnb.DEFAULT_NODE_LIMIT,
                      cut_limit=DEFAULT_CUT_LIMIT, mode=OPTIMISTIC) -> SolveResult:
    """Optimistic optimum of a pure-integer two-stage instance."""
    if mode.capitalize() != OPTIMISTIC:
        raise AssumptionError("branch and cut supports the optimistic setting only")
    _require_pure_integer(inst)
    t0 = time.perf_counter()
    result = SolveResult(INFEASIBLE, algorithm="bnc")
    lower, upper = root_bounds(inst)
    nodes = [BncNode(0, lower, upper)]
    heap = [(-INF, 0)]
    best = None  # (x, value, reactions)
    evaluated = {}

    def candidate(x):
        nonlocal best
        if x in evaluated:
            return evaluated[x]
        if not inst.first_stage_feasible(x):
            evaluated[x] = INF
            return INF
        reacts = all_reactions(inst, x, OPTIMISTIC, node_limit=node_limit)
        xi = xi_from_reactions(inst, reacts)
        val = INF if xi == INF else dot(inst.c, x) + xi + inst.offset
        evaluated[x] = val
        if val != INF and (best is None or val < best[1] or (val == best[1] and x < best[0])):
            best = (x, val, [r.y for r in reacts])
        return val

    def incumbent():
        return best[1] if best else INF

    n_cuts = 0
    while heap:
        key, nid = heapq.heappop(heap)
        node = nodes[nid]
        if key >= incumbent():
            node.status = "PrunedByBound"
            continue
        while True:
            res = solve_lp(joint_problem(inst, node.lower, node.upper, node.cuts), lexmin=True)
            if not isinstance(res, LpOptimal):
                node.status = "Infeasible"
                break
            node.lp_value = res.value + inst.offset
            if node.lp_value >= incumbent():
                node.status = "PrunedByBound"
                break
            j = _fractional(res.y)
            if j is not None:
                _branch(nodes, heap, node, j, math.floor(res.y[j]), node.lp_value, node_limit)
                node.status = "Branched"
                break
            x, ys = split_point(inst, res.y)
            check = check_bilevel_feasible(inst, x, ys, node_limit=node_limit)
            candidate(x)
            if isinstance(check, Feasible):
                node.status = "Fathomed"
                break
            try:
                new = [generate_nogood_cut(inst, w, (x, ys[w]), node.lower, node.upper, node.cuts)
                       for w in check.violating]
            except DegenerateVertexError:
                _branch_on_x(inst, nodes, heap, node, x, node.lp_value, node_limit)
                break
            for cut in new:
                node.cuts.append(cut)
                n_cuts += 1
                result.cut_log.append({"node": node.id, "scenario": cut.scenario, "f": cut.f,
                                       "g": cut.g, "rhs": cut.rhs, "separated_vertex": cut.vertex,
                                       "node_lower": node.lower, "node_upper": node.upper})
            if n_cuts > cut_limit:
                raise IterationLimit(f"branch and cut generated more than {cut_limit} cuts")
    if best is not None:
        result.status = OPTIMAL
        result.x_star, result.objective, result.reactions = best[0], best[1], best[2]
        result.x_original = inst.original_x(best[0])
        result.reported_objective = inst.report(best[1])
    result.iterations = len(nodes)
    result.wall_time = time.perf_counter() - t0
    return result


def _push_child(nodes, heap, parent, lower, upper, key, node_limit):
    child = BncNode(len(nodes), tuple(lower), tuple(upper), list(parent.cuts), depth=parent.depth + 1)
    nodes.append(child)
    if len(nodes) > node_limit:
        raise NodeLimit(f"branch and cut exceeded {node_limit} nodes")
    heapq.heappush(heap, (key, child.id))


def _branch(nodes, heap, node, j, pi0, key, node_limit):
    lo, hi = list(node.lower), list(node.upper)
    hi[j] = Fraction(pi0)
    _push_child(nodes, heap, node, node.lower, hi, key, node_limit)
    lo[j] = Fraction(pi0 + 1)
    _push_child(nodes, heap, node, lo, node.upper, key, node_limit)


def _branch_on_x(inst, nodes, heap, node, x, key, node_limit):
    """Split the first-stage box around ``x``; a single-point box was already evaluated."""
    n1 = inst.n1
    free = [j for j in range(n1) if node.lower[j] < node.upper[j]]
    if not free:
        node.status = "Fathomed"  # x is fixed and candidate(x) holds its exact value
        return
    j = free[0]
    node.status = "Branched"
    if x[j] < node.upper[j]:
        _branch(nodes, heap, node, j, x[j], key, node_limit)
    else:
        _branch(nodes, heap, node, j, x[j] - 1, key, node_limit)
