"""Brute-force reference solver and random instance generator.

Everything here is exhaustive enumeration over integer lattices with exact LP
tails for continuous columns.  It is slow on purpose and shares no search
logic with the main solvers, so agreement between the two is meaningful.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import AssumptionError, CapExceeded, UnboundedError
from .model import SecondStage, TwoStageInstance, build_instance
from .rational import INF, ONE, ZERO, dot
from .ratlp import LpInfeasible, LpOptimal, LpProblem, solve_lp
from .risk import OPTIMISTIC, _mode

DEFAULT_CAP = 10 ** 6


def _box(lower, upper, cols):
    return [range(int(lower[j]), int(upper[j]) + 1) for j in cols]


def _box_size(ranges) -> int:
    n = 1
    for r in ranges:
        n *= len(r)
    return n


class _SecondStageEnum:
    """Enumerates integer second-stage points; continuous tails by LP."""

    def __init__(self, ss: SecondStage):
        self.ss = ss
        self.I = ss.integer_columns()
        self.C = ss.continuous_columns()
        self.points = list(itertools.product(*_box(ss.lower, ss.upper, self.I)))
        self.GI = [tuple(row[j] for j in self.I) for row in ss.G]
        self.GC = tuple(tuple(row[j] for j in self.C) for row in ss.G)
        self.d2I = tuple(ss.d2[j] for j in self.I)
        self.d1I = tuple(ss.d1[j] for j in self.I)
        self.d2C = tuple(ss.d2[j] for j in self.C)
        self.d1C = tuple(ss.d1[j] for j in self.C)
        self.lC = tuple(ss.lower[j] for j in self.C)
        self.uC = tuple(ss.upper[j] for j in self.C)
        self._phi = {}

    def size(self) -> int:
        return len(self.points)

    def _rest(self, beta, yI):
        return tuple(b - dot(g, yI) for b, g in zip(beta, self.GI))

    def tail(self, rest, cost=None):
        """``min cost.y_C`` subject to ``G_C y_C >= rest``; cost defaults to ``d2_C``."""
        if not self.C:
            return (ZERO, ()) if all(v <= 0 for v in rest) else (INF, None)
        res = solve_lp(LpProblem(self.d2C if cost is None else cost, self.GC, rest, self.lC, self.uC))
        if isinstance(res, LpOptimal):
            return res.value, res.y
        if isinstance(res, LpInfeasible):
            return INF, None
        raise UnboundedError("continuous second-stage columns are unbounded")

    def phi(self, beta):
        beta = tuple(beta)
        if beta in self._phi:
            return self._phi[beta]
        best = INF
        for yI in self.points:
            v, _ = self.tail(self._rest(beta, yI))
            if v != INF:
                v += dot(self.d2I, yI)
                if v < best:
                    best = v
        self._phi[beta] = best
        return best

    def rho(self, beta, mode):
        """``(phi, reaction value, y)`` or ``None`` when infeasible."""
        beta = tuple(beta)
        level = self.phi(beta)
        if level == INF:
            return None
        sign = 1 if mode == OPTIMISTIC else -1
        best, best_y = None, None
        for yI in self.points:
            rest = self._rest(beta, yI)
            v, _ = self.tail(rest)
            if v == INF or v + dot(self.d2I, yI) != level:
                continue
            if self.C:
                # optimize d1_C over the continuous face of the level set
                cost = tuple(sign * a for a in self.d1C)
                res = solve_lp(LpProblem(cost, self.GC + (tuple(-a for a in self.d2C),),
                                         rest + (-(level - dot(self.d2I, yI)),), self.lC, self.uC))
                if not isinstance(res, LpOptimal):
                    raise UnboundedError("reaction objective unbounded over the argmin face")
                yC = res.y
            else:
                yC = ()
            val = dot(self.d1I, yI) + dot(self.d1C, yC)
            if best is None or sign * val < sign * best:
                y = [ZERO] * self.ss.n
                for j, v in zip(self.I, yI):
                    y[j] = Fraction(v)
                for j, v in zip(self.C, yC):
                    y[j] = v
                best, best_y = val, tuple(y)
        return level, best, best_y


def oracle_phi(ss: SecondStage, beta, *, cap=DEFAULT_CAP):
    """Value function by enumeration of the integer box (``beta`` in user rows)."""
    enum = _SecondStageEnum(ss) if _box_size(_box(ss.lower, ss.upper, ss.integer_columns())) <= cap else None
    if enum is None:
        raise CapExceeded("second-stage lattice exceeds the enumeration cap")
    return enum.phi(ss.expand(beta))


def oracle_rho(ss: SecondStage, beta, mode=OPTIMISTIC, *, cap=DEFAULT_CAP):
    if _box_size(_box(ss.lower, ss.upper, ss.integer_columns())) > cap:
        raise CapExceeded("second-stage lattice exceeds the enumeration cap")
    out = _SecondStageEnum(ss).rho(ss.expand(beta), _mode(mode))
    return INF if out is None else out[1]


@dataclass
class OracleReport:
    status: str
    optimum: Optional[tuple]  # (x, canonical value)
    reported_value: object
    feasible_x_set: list = field(default_factory=list)
    xi: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)  # (omega, internal beta) -> value
    reactions: dict = field(default_factory=dict)  # x -> per-scenario y
    first_stage_value: dict = field(default_factory=dict)  # x -> c.x

    @property
    def value(self):
        return self.optimum[1] if self.optimum else INF


def oracle_solve(inst: TwoStageInstance, mode=OPTIMISTIC, *, cap=DEFAULT_CAP) -> OracleReport:
    """Global optimum by enumerating first- and second-stage integer lattices.

    Second-stage ties follow ``mode``; first-stage ties go to the
    lexicographically smallest ``x``.
    """
    mode = _mode(mode)
    for j in inst.linking_columns:
        if j >= inst.r1:
            raise AssumptionError(f"x{j + 1} is a continuous linking variable")
    xI = list(range(inst.r1))
    xC = list(range(inst.r1, inst.n1))
    xranges = _box(inst.x_lb, inst.x_ub, xI)
    enum = _SecondStageEnum(inst.second_stage)
    combined = _box_size(xranges) * max(1, enum.size()) * len(inst.scenarios)
    if combined > cap:
        raise CapExceeded(f"{combined} lattice points exceed the cap of {cap}")
    report = OracleReport("Infeasible", None, INF)
    best = None
    for point in itertools.product(*xranges):
        xi_part = tuple(Fraction(v) for v in point)
        first = _first_stage_tail(inst, xi_part, xI, xC)
        if first is None:
            continue
        x, cx = first
        total = ZERO
        reacts = []
        for w, s in enumerate(inst.scenarios):
            beta = inst.beta(w, x)
            out = enum.rho(beta, mode)
            report.phi[(w, beta)] = enum.phi(beta)
            if out is None:
                total = INF
                break
            total += s.p * out[1]
            reacts.append(out[2])
        report.xi[x] = total
        report.first_stage_value[x] = cx
        if total == INF:
            continue
        report.feasible_x_set.append(x)
        report.reactions[x] = reacts
        value = cx + total + inst.offset
        if best is None or value < best[1]:
            best = (x, value)
    if best is not None:
        report.status = "Optimal"
        report.optimum = best
        report.reported_value = inst.report(best[1])
    return report


def _first_stage_tail(inst, xi_part, xI, xC):
    """Complete an integer first-stage point with the best continuous part."""
    if not xC:
        x = xi_part
        return (x, dot(inst.c, x)) if inst.first_stage_feasible(x) else None
    rhs = tuple(b - dot([row[j] for j in xI], xi_part) for row, b in zip(inst.A1, inst.b1))
    res = solve_lp(LpProblem(tuple(inst.c[j] for j in xC),
                             tuple(tuple(row[j] for j in xC) for row in inst.A1), rhs,
                             tuple(inst.x_lb[j] for j in xC), tuple(inst.x_ub[j] for j in xC)))
    if isinstance(res, LpInfeasible):
        return None
    if not isinstance(res, LpOptimal):
        raise UnboundedError("continuous first-stage columns are unbounded")
    x = xi_part + res.y
    return x, dot(inst.c, x)


# --- random instances -----------------------------------------------------------

def random_instance(seed: int, *, n1=2, n2=2, m2=2, scenarios=1, density=0.7,
                    zero_sum=False, binary_x=True, r2=None, m1=0,
                    coef=9) -> TwoStageInstance:
    """Deterministic small instance; feasible at a hidden first-stage point."""
    rng = random.Random(seed)
    r2 = n2 if r2 is None else r2

    def entry():
        return Fraction(rng.randint(-coef, coef)) if rng.random() < density else ZERO

    x_ub = [ONE if binary_x else Fraction(rng.randint(1, 3)) for _ in range(n1)]
    y_ub = [Fraction(rng.randint(1, 3)) for _ in range(n2)]
    x0 = [Fraction(rng.randint(0, int(u))) for u in x_ub]
    y0 = [Fraction(rng.randint(0, int(u))) for u in y_ub]
    G2 = [[entry() for _ in range(n2)] for _ in range(m2)]
    d2 = [Fraction(rng.randint(-coef, coef)) for _ in range(n2)]
    d1 = [-v for v in d2] if zero_sum else [Fraction(rng.randint(-coef, coef)) for _ in range(n2)]
    c = [Fraction(rng.randint(-coef, coef)) for _ in range(n1)]
    A1 = [[entry() for _ in range(n1)] for _ in range(m1)]
    b1 = [dot(row, x0) - rng.randint(0, 2) for row in A1]
    weights = [rng.randint(1, 4) for _ in range(scenarios)]
    total = sum(weights)
    scen = []
    for w in weights:
        A2 = [[entry() for _ in range(n1)] for _ in range(m2)]
        b2 = [dot(g, y0) + dot(a, x0) - rng.randint(0, 3) for g, a in zip(G2, A2)]
        scen.append((Fraction(w, total), A2, b2))
    return build_instance(c=c, A1=A1, b1=b1, x_lb=[ZERO] * n1, x_ub=x_ub, r1=n1,
                          d1=d1, d2=d2, G2=G2, y_lb=[ZERO] * n2, y_ub=y_ub, r2=r2,
                          scenarios=scen)
