"""Value functions of the second-stage problem and bounding functions for them.

All public functions take ``beta`` in the user's row coordinates (a bare
number is accepted when there is a single row) and operate on a
:class:`~msmilp.model.SecondStage`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import bnb
from .errors import AssumptionError, UnboundedError
from .model import SecondStage
from .rational import INF, ZERO, dot, to_q
from .ratlp import LpInfeasible, LpOptimal, LpProblem, solve_lp


def _internal(ss: SecondStage, beta) -> tuple:
    return ss.expand(beta)


def phi_internal(ss: SecondStage, beta, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    res = bnb.solve_milp(ss.d2, ss.G, beta, ss.lower, ss.upper, ss.r, node_limit=node_limit)
    return res


def eval_phi(ss: SecondStage, beta, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Optimal second-stage cost at ``beta``; ``math.inf`` if infeasible."""
    return phi_internal(ss, _internal(ss, beta), node_limit=node_limit).value


def _sub_lp(ss: SecondStage, cols, beta) -> LpProblem:
    return LpProblem(tuple(ss.d2[j] for j in cols),
                     tuple(tuple(row[j] for j in cols) for row in ss.G),
                     tuple(beta),
                     tuple(ss.lower[j] for j in cols),
                     tuple(ss.upper[j] for j in cols))


def phi_C_internal(ss: SecondStage, beta):
    cols = ss.continuous_columns()
    if not cols:
        return ZERO if all(b <= 0 for b in beta) else INF
    res = solve_lp(_sub_lp(ss, cols, beta))
    if isinstance(res, LpOptimal):
        return res.value
    if isinstance(res, LpInfeasible):
        return INF
    raise UnboundedError("the continuous restriction is unbounded below")


def eval_phi_C(ss: SecondStage, beta):
    """Value of the LP over the continuous columns only (integer columns at zero)."""
    return phi_C_internal(ss, _internal(ss, beta))


def eval_phi_I(ss: SecondStage, beta, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Value of the pure integer problem obtained by dropping continuous columns."""
    cols = ss.integer_columns()
    b = _internal(ss, beta)
    if not cols:
        return ZERO if all(v <= 0 for v in b) else INF
    p = _sub_lp(ss, cols, b)
    return bnb.solve_milp(p.d, p.G, p.beta, p.lower, p.upper, len(cols), node_limit=node_limit).value


# --- integer-fixing cones -------------------------------------------------------

@dataclass(frozen=True)
class IfvfCone:
    """``beta -> offset + phi_C(beta - shift)``: an upper bound on the value function."""

    ss: SecondStage
    y_I_hat: tuple
    offset: Fraction
    shift: tuple  # internal rows

    def value_internal(self, beta):
        return self.offset + phi_C_internal(self.ss, tuple(b - s for b, s in zip(beta, self.shift)))

    def __call__(self, beta):
        return self.value_internal(_internal(self.ss, beta))


def make_ifvf(ss: SecondStage, y_hat) -> IfvfCone:
    """Cone obtained by fixing the integer part of ``y_hat`` (extra entries ignored)."""
    y_I = tuple(to_q(v) for v in y_hat[:ss.r])
    offset = dot(ss.d2[:ss.r], y_I)
    shift = tuple(dot(row[:ss.r], y_I) for row in ss.G)
    return IfvfCone(ss, y_I, offset, shift)


# --- sandwich -------------------------------------------------------------------

@dataclass
class ValueFunctionApprox:
    """Lower envelope of dual functions and upper envelope of integer-fixing cones.

    Dual functions are kept in the user's row coordinates.  ``add_point``
    refines one persistent branch-and-bound tree, so the newest path
    strengthened function is exact at every point added so far.
    """

    ss: SecondStage
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    strong_points: list = field(default_factory=list)
    tree: Optional[bnb.BnbTree] = None
    node_limit: int = bnb.DEFAULT_NODE_LIMIT

    def add_point(self, beta):
        b = _internal(self.ss, beta)
        if self.tree is None:
            self.tree = bnb.new_tree(self.ss.d2, self.ss.G, self.ss.lower, self.ss.upper, self.ss.r,
                                     node_limit=self.node_limit)
        bnb.refine_tree(self.tree, b)
        F = bnb.extract_dual_function(self.tree, bnb.PATH_MIN).collapse(self.ss.row_map, self.ss.m_orig)
        self.lower.append(F)
        res = bnb.tree_result(self.tree)
        if res.status == "optimal":
            self.upper.append(make_ifvf(self.ss, res.y))
            self.strong_points.append(beta)
        return res.value


def _as_vec(beta):
    return tuple(beta) if isinstance(beta, (tuple, list)) else (beta,)


def sandwich_eval(approx: ValueFunctionApprox, beta):
    """``(max of lower functions, min of upper cones)`` at ``beta``."""
    b = _as_vec(beta)
    lo = max((F(b) for F in approx.lower), default=-INF)
    hi = min((cone(b) for cone in approx.upper), default=INF)
    return lo, hi


# --- exact construction for one row ---------------------------------------------

@dataclass(frozen=True)
class ContinuousCone1D:
    """Closed form of the one-row continuous restriction.

    ``phi_C(beta) = right * beta`` for ``beta > 0`` and ``left * beta`` for
    ``beta < 0``; ``None`` marks a side where the LP is infeasible.
    """

    left: Optional[Fraction]
    right: Optional[Fraction]

    def __call__(self, beta):
        if beta > 0:
            return INF if self.right is None else self.right * beta
        if beta < 0:
            return INF if self.left is None else self.left * beta
        return ZERO


def _row_in_user_sense(ss: SecondStage):
    if ss.m_orig != 1:
        raise AssumptionError(f"exact construction needs a single second-stage row, got {ss.m_orig}")
    signs = tuple(sign for _, sign in ss.row_map)
    sense = {(1,): ">=", (-1,): "<=", (1, -1): "="}[signs]
    g = tuple(signs[0] * a for a in ss.G[0])
    return g, sense


def continuous_cone_1row(ss: SecondStage) -> ContinuousCone1D:
    g, sense = _row_in_user_sense(ss)
    lo, hi = -INF, INF
    for j in ss.continuous_columns():
        if ss.lower[j] != 0 or ss.upper[j] != INF:
            raise AssumptionError("closed form needs continuous columns bounded only by y >= 0")
        d, a = ss.d2[j], g[j]
        if a > 0:
            hi = min(hi, d / a)
        elif a < 0:
            lo = max(lo, d / a)
        elif d < 0:
            raise UnboundedError("a continuous column with negative cost has no constraint")
    if sense == ">=":
        lo = max(lo, ZERO)
    elif sense == "<=":
        hi = min(hi, ZERO)
    if lo > hi:
        raise UnboundedError("the continuous restriction is unbounded below")
    return ContinuousCone1D(None if lo == -INF else lo, None if hi == INF else hi)


@dataclass(frozen=True)
class PiecewiseVf1D:
    """Exact one-row value function as the minimum of translated cones.

    ``generators`` lists ``(y_I, cost, shift)`` for the non-dominated integer
    points; ``breakpoints`` holds ``(beta, value)`` where the envelope can
    change slope or jump; ``segments`` holds ``(a, b, slope, intercept)`` for
    each open interval between breakpoints (``a``/``b`` may be infinite).
    """

    cone: ContinuousCone1D
    generators: tuple
    breakpoints: tuple
    segments: tuple

    def __call__(self, beta):
        beta = to_q(beta[0] if isinstance(beta, (tuple, list)) else beta)
        return min((cost + self.cone(beta - shift) for _, cost, shift in self.generators), default=INF)


def construct_vf_1row(ss: SecondStage) -> PiecewiseVf1D:
    g, _ = _row_in_user_sense(ss)
    cone = continuous_cone_1row(ss)
    ranges = [range(int(ss.lower[j]), int(ss.upper[j]) + 1) for j in ss.integer_columns()]
    # cheapest integer point for each shift, lexicographically first on ties
    best = {}
    for s in itertools.product(*ranges):
        cost = dot(ss.d2[:ss.r], s)
        shift = dot(g[:ss.r], s)
        if shift not in best or cost < best[shift][1]:
            best[shift] = (tuple(Fraction(v) for v in s), cost, shift)
    cands = sorted(best.values(), key=lambda t: (t[1], t[2]))
    kept = []
    for s in cands:
        if not any(s[1] >= k[1] + cone(s[2] - k[2]) for k in kept):
            kept = [k for k in kept if not k[1] >= s[1] + cone(k[2] - s[2])]
            kept.append(s)
    kept.sort(key=lambda t: t[2])
    gens = tuple(kept)

    def value(b):
        return min((cost + cone(b - shift) for _, cost, shift in gens), default=INF)

    pts = set(k[2] for k in gens)
    if cone.left is not None and cone.right is not None and cone.left != cone.right:
        for a in gens:
            for b in gens:
                if a[2] < b[2]:
                    # right arm of a meets left arm of b
                    x = (b[1] - a[1] + cone.right * a[2] - cone.left * b[2]) / (cone.right - cone.left)
                    if a[2] <= x <= b[2]:
                        pts.add(x)
    pts = sorted(pts)
    breakpoints = tuple((p, value(p)) for p in pts)
    segments = []
    bounds = [-INF] + pts + [INF]
    for a, b in zip(bounds, bounds[1:]):
        if a == -INF and b == INF:
            probe_l, probe_r = Fraction(-1), Fraction(1)
        elif a == -INF:
            probe_l, probe_r = b - 2, b - 1
        elif b == INF:
            probe_l, probe_r = a + 1, a + 2
        else:
            probe_l, probe_r = a + (b - a) / 3, a + 2 * (b - a) / 3
        vl, vr = value(probe_l), value(probe_r)
        if vl == INF or vr == INF:
            segments.append((a, b, None, None))
            continue
        slope = (vr - vl) / (probe_r - probe_l)
        segments.append((a, b, slope, vl - slope * probe_l))
    return PiecewiseVf1D(cone, gens, breakpoints, tuple(segments))
