"""Benders-type decomposition on the risk-function reformulation.

The master problem is ``min c.x + sum_w p_w z_w`` over the first-stage
region, with ``z_w`` bounded below by cuts that under-estimate the scenario
risk ``Xi_w``.  Three cut families are supported:

* linear LP-dual cuts (continuous recourse),
* dual functions from branch-and-bound trees (integer recourse with
  ``d1 = d2``), encoded with one binary per tree leaf,
* integer L-shaped cuts on binary linking variables (general ``d1``).

The master itself is solved with :mod:`msmilp.bnb`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import bnb
from .errors import AssumptionError, InfeasibleMaster, UnboundedBoxError, UnboundedError
from .model import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SolveResult, TwoStageInstance,
                    binarize_linking)
from .rational import INF, ONE, ZERO, dot
from .ratlp import LpInfeasible, LpOptimal, LpProblem, solve_lp
from .risk import OPTIMISTIC, all_reactions, worker_count

DEFAULT_MAX_ITER = 200


# --- cuts -------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearCut:
    """``z >= u.(b2 - A2 x) + const``."""

    u: tuple
    const: Fraction
    kind: str = "LinearCut"


@dataclass(frozen=True)
class DualFnCut:
    """``z >= F(b2 - A2 x)`` for a min-of-max dual function ``F`` (internal rows)."""

    F: bnb.DualFunction
    kind: str = "DualFnCut"


@dataclass(frozen=True)
class IntegerLShapedCut:
    """Optimality cut that is tight at the binary point ``x_ref`` (linking coordinates)."""

    columns: tuple
    x_ref: tuple
    height: Fraction
    z_lb: Fraction
    kind: str = "IntegerLShapedCut"

    @property
    def vacuous(self) -> bool:
        return self.height <= self.z_lb

    def bound(self, x) -> Fraction:
        """Right-hand side of ``z >= ...`` at first-stage point ``x``."""
        s1 = [j for j, v in zip(self.columns, self.x_ref) if v == 1]
        s0 = [j for j, v in zip(self.columns, self.x_ref) if v == 0]
        agree = sum((x[j] for j in s1), ZERO) - sum((x[j] for j in s0), ZERO)
        return self.z_lb + (self.height - self.z_lb) * (agree - len(s1) + 1)


@dataclass(frozen=True)
class NoGoodCut:
    """Feasibility cut removing one binary point: ``sum_S0 x - sum_S1 x >= 1 - |S1|``."""

    columns: tuple
    x_ref: tuple
    kind: str = "NoGoodCut"


@dataclass(frozen=True)
class FarkasCut:
    """``ray.(b2 - A2 x) + const <= 0`` for every feasible ``x``."""

    ray: tuple
    const: Fraction
    kind: str = "FarkasCut"


@dataclass(frozen=True)
class DisjunctiveFarkasCut:
    """At least one tree leaf must be feasible: ``OR_t ray_t.(b2 - A2 x) + const_t <= 0``."""

    terms: tuple  # ((ray, const), ...)
    kind: str = "DisjunctiveFarkasCut"


def make_integer_lshaped_cut(x_ref, xi_value, z_lb, columns=None) -> IntegerLShapedCut:
    x_ref = tuple(Fraction(v) for v in x_ref)
    if any(v not in (0, 1) for v in x_ref):
        raise AssumptionError("integer L-shaped cuts need a binary reference point")
    columns = tuple(range(len(x_ref))) if columns is None else tuple(columns)
    return IntegerLShapedCut(columns, x_ref, Fraction(xi_value), Fraction(z_lb))


@dataclass
class MasterState:
    inst: TwoStageInstance
    z_lb: list
    pools: list  # per scenario: list of cuts
    latest_dualfn: list  # per scenario: Optional[DualFnCut]
    iteration: int = 0
    incumbent: Optional[tuple] = None  # (x, canonical value)
    bound_trace: list = field(default_factory=list)

    def cuts(self, omega):
        out = list(self.pools[omega])
        if self.latest_dualfn[omega] is not None:
            out.append(self.latest_dualfn[omega])
        return out


# --- master linearization -----------------------------------------------------------

@dataclass
class MasterMilp:
    d: tuple
    G: tuple
    rhs: tuple
    lower: tuple
    upper: tuple
    r: int
    x_cols: tuple  # master column of each x_j
    z_cols: tuple
    n_binaries: int

    def solve(self, node_limit):
        return bnb.solve_milp(self.d, self.G, self.rhs, self.lower, self.upper, self.r,
                              node_limit=node_limit)


def _affine_in_x(inst, omega, u, const):
    """``u.(b2 - A2 x) + const`` as ``(coefficients on x, constant)``."""
    s = inst.scenarios[omega]
    coef = [ZERO] * inst.n1
    for ui, row in zip(u, s.A2):
        if ui:
            for j, a in enumerate(row):
                if a:
                    coef[j] -= ui * a
    return coef, dot(u, s.b2) + const


def _box_range(inst, coef):
    lo = hi = ZERO
    for j, a in enumerate(coef):
        if not a:
            continue
        lb, ub = inst.x_lb[j], inst.x_ub[j]
        if ub == INF or lb == -INF:
            raise UnboundedBoxError(f"x{j + 1} needs finite bounds for the master encoding")
        if a > 0:
            lo, hi = lo + a * lb, hi + a * ub
        else:
            lo, hi = lo + a * ub, hi + a * lb
    return lo, hi


class _Builder:
    def __init__(self, inst: TwoStageInstance, z_lb):
        self.inst = inst
        self.z_lb = z_lb
        self.rows = []  # (x coef list, z index or None, z coef, {binary: coef}, rhs)
        self.n_bin = 0

    def new_binary(self):
        self.n_bin += 1
        return self.n_bin - 1

    def add(self, xcoef, zi, zcoef, bins, rhs):
        self.rows.append((list(xcoef), zi, zcoef, dict(bins), rhs))

    def build(self) -> MasterMilp:
        inst = self.inst
        r1, n1, S = inst.r1, inst.n1, len(inst.scenarios)
        nb = self.n_bin
        # columns: integer x, binaries, continuous x, z
        x_cols = tuple(list(range(r1)) + list(range(r1 + nb, n1 + nb)))
        z_cols = tuple(range(n1 + nb, n1 + nb + S))
        N = n1 + nb + S
        d = [ZERO] * N
        lower = [ZERO] * N
        upper = [ONE] * N
        for j in range(n1):
            d[x_cols[j]] = inst.c[j]
            lower[x_cols[j]] = inst.x_lb[j]
            upper[x_cols[j]] = inst.x_ub[j]
        for w, s in enumerate(inst.scenarios):
            d[z_cols[w]] = s.p
            lower[z_cols[w]] = self.z_lb[w]
            upper[z_cols[w]] = INF
        G, rhs = [], []
        for row, b in zip(inst.A1, inst.b1):
            g = [ZERO] * N
            for j, a in enumerate(row):
                g[x_cols[j]] = a
            G.append(tuple(g))
            rhs.append(b)
        for xcoef, zi, zc, bins, b in self.rows:
            g = [ZERO] * N
            for j, a in enumerate(xcoef):
                if a:
                    g[x_cols[j]] = a
            if zi is not None:
                g[z_cols[zi]] = zc
            for k, a in bins.items():
                g[r1 + k] = a
            G.append(tuple(g))
            rhs.append(b)
        return MasterMilp(tuple(d), tuple(G), tuple(rhs), tuple(lower), tuple(upper), r1 + nb,
                          x_cols, z_cols, nb)


def _encode_cut(B: _Builder, omega: int, cut):
    inst, z_lb = B.inst, B.z_lb[omega]
    if isinstance(cut, LinearCut):
        coef, const = _affine_in_x(inst, omega, cut.u, cut.const)
        # z - coef.x >= const
        B.add([-a for a in coef], omega, ONE, {}, const)
    elif isinstance(cut, FarkasCut):
        coef, const = _affine_in_x(inst, omega, cut.ray, cut.const)
        # coef.x + const <= 0
        B.add([-a for a in coef], None, ZERO, {}, const)
    elif isinstance(cut, IntegerLShapedCut):
        if cut.vacuous:
            return
        h = cut.height - cut.z_lb
        coef = [ZERO] * inst.n1
        n_s1 = 0
        for j, v in zip(cut.columns, cut.x_ref):
            if v == 1:
                coef[j] = -h
                n_s1 += 1
            else:
                coef[j] = h
        B.add(coef, omega, ONE, {}, cut.z_lb + h * (1 - n_s1))
    elif isinstance(cut, NoGoodCut):
        coef = [ZERO] * inst.n1
        n_s1 = 0
        for j, v in zip(cut.columns, cut.x_ref):
            if v == 1:
                coef[j] = -ONE
                n_s1 += 1
            else:
                coef[j] = ONE
        B.add(coef, None, ZERO, {}, Fraction(1 - n_s1))
    elif isinstance(cut, DualFnCut):
        _encode_dualfn(B, omega, cut.F, z_lb)
    elif isinstance(cut, DisjunctiveFarkasCut):
        _encode_disjunctive(B, omega, cut)
    else:
        raise TypeError(f"unknown cut {cut!r}")


def _encode_dualfn(B: _Builder, omega, F: bnb.DualFunction, z_lb):
    inst = B.inst
    groups = []
    for g in F.groups:
        pieces = []
        for p in g:
            coef, const = _affine_in_x(inst, omega, p.slope, p.const)
            lo, hi = _box_range(inst, coef)
            if hi + const <= z_lb:
                continue  # implied by the lower bound on z
            pieces.append((coef, const, lo + const, hi + const))
        g_lo = max((pc[2] for pc in pieces), default=z_lb)
        g_hi = max((pc[3] for pc in pieces), default=z_lb)
        groups.append((pieces, max(g_lo, z_lb), max(g_hi, z_lb)))
    if not groups:
        return
    # the min over groups never exceeds the smallest group upper bound
    star = min(range(len(groups)), key=lambda t: (groups[t][2], t))
    cap = groups[star][2]
    if cap <= z_lb:
        return
    live = [t for t in range(len(groups)) if t == star or groups[t][1] < cap]
    if len(live) == 1:
        for coef, const, _, _ in groups[live[0]][0]:
            B.add([-a for a in coef], omega, ONE, {}, const)
        return
    bins = []
    for t in live:
        w = B.new_binary()
        bins.append(w)
        for coef, const, _, hi in groups[t][0]:
            M = max(ZERO, hi - z_lb)
            # z - coef.x - M w >= const - M
            B.add([-a for a in coef], omega, ONE, {w: -M}, const - M)
    B.add([ZERO] * inst.n1, None, ZERO, {w: ONE for w in bins}, ONE)
    B.add([ZERO] * inst.n1, None, ZERO, {w: -ONE for w in bins}, -ONE)


def _encode_disjunctive(B: _Builder, omega, cut: DisjunctiveFarkasCut):
    inst = B.inst
    terms = []
    for ray, const in cut.terms:
        coef, c0 = _affine_in_x(inst, omega, ray, const)
        lo, hi = _box_range(inst, coef)
        terms.append((coef, c0, hi + c0, lo + c0))
    if any(hi <= 0 for _, _, hi, _ in terms):
        return  # some leaf is never certified infeasible on the box
    terms = [t for t in terms if t[3] <= 0]  # leaves infeasible on the whole box drop out
    if not terms:
        raise InfeasibleMaster("scenario is infeasible for every first-stage point")
    if len(terms) == 1:
        coef, c0, _, _ = terms[0]
        B.add([-a for a in coef], None, ZERO, {}, c0)
        return
    bins = []
    for coef, c0, hi, _ in terms:
        w = B.new_binary()
        bins.append(w)
        # coef.x + c0 <= hi (1 - w)  <=>  -coef.x - hi w >= c0 - hi
        B.add([-a for a in coef], None, ZERO, {w: -hi}, c0 - hi)
    B.add([ZERO] * inst.n1, None, ZERO, {w: ONE for w in bins}, ONE)


def linearize_master(state: MasterState, inst: Optional[TwoStageInstance] = None) -> MasterMilp:
    """Single MILP whose optimum is the master problem's optimum."""
    inst = inst or state.inst
    B = _Builder(inst, state.z_lb)
    for w in range(len(inst.scenarios)):
        for cut in state.cuts(w):
            _encode_cut(B, w, cut)
    return B.build()


# --- helpers ----------------------------------------------------------------------

def scenario_lower_bound(inst: TwoStageInstance, omega: int):
    """LP bound ``min d1.y`` over the joint relaxation of one scenario."""
    s = inst.scenarios[omega]
    n1, n2 = inst.n1, inst.n2
    d = (ZERO,) * n1 + inst.d1
    G = [tuple(row) + (ZERO,) * n2 for row in inst.A1]
    G += [tuple(a) + tuple(g) for a, g in zip(s.A2, inst.G2)]
    res = solve_lp(LpProblem(d, tuple(G), inst.b1 + s.b2, inst.x_lb + inst.y_lb, inst.x_ub + inst.y_ub))
    if isinstance(res, LpOptimal):
        return res.value
    if isinstance(res, LpInfeasible):
        raise InfeasibleMaster(f"scenario {omega} has no feasible point at all")
    raise UnboundedError(f"scenario {omega}: first-stage objective of the reaction is unbounded")


def _check_linking(inst: TwoStageInstance, need_binary: bool):
    for j in inst.linking_columns:
        if j >= inst.r1:
            raise AssumptionError(f"x{j + 1} is a continuous linking variable")
        if inst.x_ub[j] == INF or inst.x_lb[j] == -INF:
            raise UnboundedBoxError(f"linking variable x{j + 1} needs finite bounds")
        if need_binary and not (inst.x_lb[j] == 0 and inst.x_ub[j] == 1):
            raise AssumptionError(
                f"x{j + 1} is not binary; binarize the linking variables first")


def _master_point(master: MasterMilp, y):
    x = tuple(y[c] for c in master.x_cols)
    z = tuple(y[c] for c in master.z_cols)
    return x, z


def _cut_record(it, omega, cut):
    rec = {"iteration": it, "scenario": omega, "kind": cut.kind, "cut": cut}
    if isinstance(cut, DualFnCut):
        rec["groups"] = len(cut.F.groups)
        rec["pieces"] = len(cut.F.pieces)
    elif isinstance(cut, IntegerLShapedCut):
        rec["x_ref"] = cut.x_ref
        rec["height"] = cut.height
    elif isinstance(cut, NoGoodCut):
        rec["x_ref"] = cut.x_ref
    elif isinstance(cut, LinearCut):
        rec["u"] = cut.u
        rec["const"] = cut.const
    elif isinstance(cut, DisjunctiveFarkasCut):
        rec["terms"] = len(cut.terms)
    return rec


# --- generalized Benders ------------------------------------------------------------

def solve_generalized_benders(inst: TwoStageInstance, *, max_iter=DEFAULT_MAX_ITER,
                              node_limit=bnb.DEFAULT_NODE_LIMIT, auto_binarize=False,
                              mode=OPTIMISTIC) -> SolveResult:
    """Optimistic generalized Benders with exact termination test.

    Stops when every scenario with positive probability has ``z_w`` equal to
    ``Xi_w(x^k)`` and every zero-probability scenario is feasible at ``x^k``.
    """
    if mode.capitalize() != OPTIMISTIC:
        raise AssumptionError("decomposition algorithms support the optimistic setting only")
    t0 = time.perf_counter()
    source = inst
    same = inst.d1 == inst.d2
    if not same:
        if auto_binarize:
            _check_linking(inst, need_binary=False)
            inst = binarize_linking(inst)
        _check_linking(inst, need_binary=True)
    else:
        _check_linking(inst, need_binary=False)
    S = len(inst.scenarios)
    ss = inst.second_stage
    linking = inst.linking_columns
    try:
        z_lb = [scenario_lower_bound(inst, w) for w in range(S)]
    except InfeasibleMaster as exc:
        return _finish(SolveResult(INFEASIBLE, message=str(exc), algorithm="benders"), source, inst, t0)
    state = MasterState(inst, z_lb, [[] for _ in range(S)], [None] * S)
    trees = [bnb.new_tree(ss.d2, ss.G, ss.lower, ss.upper, ss.r, node_limit=node_limit)
             for _ in range(S)] if same else None
    result = SolveResult(ITERATION_LIMIT, algorithm="benders")
    best_upper = INF
    for k in range(1, max_iter + 1):
        state.iteration = k
        master = linearize_master(state)
        res = master.solve(node_limit)
        if res.status != "optimal":
            result.status = INFEASIBLE
            result.message = "master problem infeasible"
            break
        x, z = _master_point(master, res.y)
        lower = res.value + inst.offset
        if state.bound_trace and lower < state.bound_trace[-1]:
            raise AssertionError("master bound decreased")  # cuts only ever tighten the master
        state.bound_trace.append(lower)
        # step 2: evaluate the scenario risks at x^k and add strong cuts
        evals = _evaluate(inst, trees, x, node_limit)
        done = True
        xi = ZERO
        for w, s in enumerate(inst.scenarios):
            val, react = evals[w]
            if val == INF:
                done = False
                xi = INF
                cut = _feasibility_cut(inst, trees, w, x, linking, same)
                state.pools[w].append(cut)
                result.cut_log.append(_cut_record(k, w, cut))
            else:
                if xi != INF:
                    xi += s.p * val
                if s.p > 0 and z[w] < val:
                    done = False
            if same:
                F = bnb.extract_dual_function(trees[w], bnb.PATH_MIN)
                cut = DualFnCut(F)
                if val != INF and s.p > 0 and z[w] < val:
                    result.cut_log.append(_cut_record(k, w, cut))
                state.latest_dualfn[w] = cut
            elif val != INF and s.p > 0 and z[w] < val:
                cut = make_integer_lshaped_cut([x[j] for j in linking], val, z_lb[w], linking)
                state.pools[w].append(cut)
                result.cut_log.append(_cut_record(k, w, cut))
        upper = dot(inst.c, x) + xi + inst.offset if xi != INF else INF
        if upper < best_upper:
            best_upper = upper
            state.incumbent = (x, upper)
        result.iteration_log.append({
            "iter": k, "master_value": lower, "sum_pz": dot([s.p for s in inst.scenarios], z),
            "xi": xi, "gap": upper - lower if upper != INF else INF, "z": tuple(z),
        })
        if done:
            result.status = OPTIMAL
            result.x_star = x
            result.reactions = [evals[w][1] for w in range(S)]
            result.objective = upper
            break
    else:
        if state.incumbent is not None:
            x = state.incumbent[0]
            evals = _evaluate(inst, trees, x, node_limit)
            result.x_star = x
            result.reactions = [e[1] for e in evals]
            result.objective = state.incumbent[1]
        result.message = f"stopped after {max_iter} iterations"
    result.iterations = state.iteration
    result.lower_bound_trace = list(state.bound_trace)
    return _finish(result, source, inst, t0)


def _evaluate(inst, trees, x, node_limit):
    """``(Xi_w(x), reaction)`` per scenario; trees are refined in place when given."""
    if trees is None:
        reacts = all_reactions(inst, x, OPTIMISTIC, node_limit=node_limit)
        return [(INF, None) if r == INF else (r.reaction_value, r.y) for r in reacts]

    def one(w):
        tree = bnb.refine_tree(trees[w], inst.beta(w, x))
        if tree.incumbent is None:
            return INF, None
        y, val = tree.incumbent
        return dot(inst.d1, y), y

    S = len(inst.scenarios)
    if worker_count() > 1 and S > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            return list(pool.map(one, range(S)))
    return [one(w) for w in range(S)]


def _feasibility_cut(inst, trees, w, x, linking, same):
    if not same:
        return NoGoodCut(tuple(linking), tuple(x[j] for j in linking))
    tree = trees[w]
    beta = inst.beta(w, x)
    terms = []
    for leaf in tree.leaves:
        if leaf.solved_beta != beta or leaf.ray is None:
            continue
        ray = leaf.ray
        const = ray.value((ZERO,) * len(beta), leaf.lower, leaf.upper)
        terms.append((ray.v, const))
    return DisjunctiveFarkasCut(tuple(terms))


def _finish(result: SolveResult, source: TwoStageInstance, inst: TwoStageInstance, t0) -> SolveResult:
    if result.x_star is not None:
        result.x_original = inst.original_x(result.x_star)
        if result.objective is not None and result.objective != INF:
            result.reported_objective = source.report(result.objective)
    result.wall_time = time.perf_counter() - t0
    return result


# --- classical L-shaped -------------------------------------------------------------

def solve_lshaped_continuous(inst: TwoStageInstance, *, max_iter=DEFAULT_MAX_ITER,
                             node_limit=bnb.DEFAULT_NODE_LIMIT) -> SolveResult:
    """L-shaped method for continuous recourse with ``d1 = d2``.

    Optimality cuts are LP dual vertices at ``b2 - A2 x^k`` and feasibility
    cuts come from Farkas rays, so continuous linking variables are fine here.
    """
    if inst.r2 != 0 or inst.d1 != inst.d2:
        raise AssumptionError("the L-shaped method needs continuous recourse with d1 = d2")
    t0 = time.perf_counter()
    for j in inst.linking_columns:
        if inst.x_ub[j] == INF or inst.x_lb[j] == -INF:
            raise UnboundedBoxError(f"linking variable x{j + 1} needs finite bounds")
    S = len(inst.scenarios)
    ss = inst.second_stage
    try:
        z_lb = [scenario_lower_bound(inst, w) for w in range(S)]
    except InfeasibleMaster as exc:
        return _finish(SolveResult(INFEASIBLE, message=str(exc), algorithm="lshaped"), inst, inst, t0)
    state = MasterState(inst, z_lb, [[] for _ in range(S)], [None] * S)
    result = SolveResult(ITERATION_LIMIT, algorithm="lshaped")
    for k in range(1, max_iter + 1):
        state.iteration = k
        master = linearize_master(state)
        res = master.solve(node_limit)
        if res.status != "optimal":
            result.status = INFEASIBLE
            result.message = "master problem infeasible"
            break
        x, z = _master_point(master, res.y)
        lower = res.value + inst.offset
        state.bound_trace.append(lower)
        done, xi, reactions = True, ZERO, []
        for w, s in enumerate(inst.scenarios):
            beta = inst.beta(w, x)
            lp = solve_lp(LpProblem(ss.d2, ss.G, beta, ss.lower, ss.upper))
            if isinstance(lp, LpInfeasible):
                ray = lp.ray
                cut = FarkasCut(ray.v, ray.value((ZERO,) * len(beta), ss.lower, ss.upper))
                state.pools[w].append(cut)
                result.cut_log.append(_cut_record(k, w, cut))
                done, xi = False, INF
                reactions.append(None)
                continue
            if not isinstance(lp, LpOptimal):
                raise UnboundedError(f"scenario {w}: recourse LP is unbounded")
            reactions.append(lp.y)
            if xi != INF:
                xi += s.p * lp.value
            if s.p > 0 and z[w] < lp.value:
                done = False
                u, const = lp.cert.slope_and_constant(ss.lower, ss.upper)
                cut = LinearCut(tuple(u), const)
                state.pools[w].append(cut)
                result.cut_log.append(_cut_record(k, w, cut))
        upper = dot(inst.c, x) + xi + inst.offset if xi != INF else INF
        result.iteration_log.append({
            "iter": k, "master_value": lower, "sum_pz": dot([s.p for s in inst.scenarios], z),
            "xi": xi, "gap": upper - lower if upper != INF else INF,
        })
        if done:
            result.status = OPTIMAL
            result.x_star = x
            result.reactions = reactions
            result.objective = upper
            break
    else:
        result.message = f"stopped after {max_iter} iterations"
    result.iterations = state.iteration
    result.lower_bound_trace = list(state.bound_trace)
    return _finish(result, inst, inst, t0)
