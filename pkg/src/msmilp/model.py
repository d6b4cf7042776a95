"""Instance and result data model.

Instances are kept in a canonical internal form: every constraint row reads
``>=`` and both stages minimize.  ``<=`` rows are negated, ``=`` rows become a
pair ``[row, -row]`` and maximizing objectives are negated.  The original
senses are remembered in :class:`SenseTag` so files can be written back and
objectives reported in the user's sense.

Second-stage constraints for scenario ``w`` read ``A2_w x + G2 y >= b2_w``,
so the right-hand side seen by the second stage is ``beta = b2_w - A2_w x``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

from .errors import AssumptionError, DimensionError, ParseError
from .rational import INF, ONE, ZERO, dot, fmt_q, to_bound, to_q

GE, LE, EQ = ">=", "<=", "="
_SENSES = (GE, LE, EQ)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
ASSUMPTION_VIOLATION = "AssumptionViolation"
ITERATION_LIMIT = "IterationLimit"


def row_map_for(senses: Sequence[str]) -> tuple:
    """Internal rows as ``(original_row, sign)`` pairs for a list of senses."""
    out = []
    for i, s in enumerate(senses):
        if s == GE:
            out.append((i, 1))
        elif s == LE:
            out.append((i, -1))
        else:
            out.append((i, 1))
            out.append((i, -1))
    return tuple(out)


def expand_rows(rows, rhs, senses):
    """Apply a sense list to original rows; returns canonical ``(rows, rhs)``."""
    new_rows, new_rhs = [], []
    for orig, sign in row_map_for(senses):
        new_rows.append(tuple(sign * a for a in rows[orig]))
        new_rhs.append(sign * rhs[orig])
    return tuple(new_rows), tuple(new_rhs)


@dataclass(frozen=True)
class SenseTag:
    stage1_max: bool = False
    stage2_max: bool = False
    rows1: tuple = ()
    rows2: tuple = ()

    @property
    def row_map1(self):
        return row_map_for(self.rows1)

    @property
    def row_map2(self):
        return row_map_for(self.rows2)


@dataclass(frozen=True)
class Scenario:
    p: Fraction
    A2: tuple
    b2: tuple


@dataclass(frozen=True)
class SecondStage:
    """The scenario-independent second-stage problem ``min d2 y, G y >= beta``.

    ``row_map`` ties internal rows to the user's rows; public functions take
    ``beta`` in the user's coordinates and call :meth:`expand`.
    """

    d1: tuple
    d2: tuple
    G: tuple
    lower: tuple
    upper: tuple
    r: int
    row_map: tuple
    m_orig: int

    @classmethod
    def from_rows(cls, d2, G, *, senses=None, r=0, lower=None, upper=None, d1=None):
        """Build a second stage from rows written in the user's senses."""
        d2 = tuple(to_q(v) for v in d2)
        n = len(d2)
        G = tuple(tuple(to_q(a) for a in row) for row in G)
        senses = tuple(senses) if senses is not None else (GE,) * len(G)
        rows, _ = expand_rows(G, (ZERO,) * len(G), senses)
        lower = tuple(to_q(v) for v in lower) if lower is not None else (ZERO,) * n
        upper = tuple(to_bound(v, default=INF) for v in upper) if upper is not None else (INF,) * n
        d1 = tuple(to_q(v) for v in d1) if d1 is not None else d2
        return cls(d1, d2, rows, lower, upper, r, row_map_for(senses), len(G))

    @property
    def n(self) -> int:
        return len(self.d2)

    @property
    def m(self) -> int:
        return len(self.G)

    def expand(self, beta_orig) -> tuple:
        if not isinstance(beta_orig, (tuple, list)):
            beta_orig = (beta_orig,)
        if len(beta_orig) != self.m_orig:
            raise DimensionError(f"expected {self.m_orig} right-hand side entries, got {len(beta_orig)}")
        return tuple(sign * to_q(beta_orig[i]) for i, sign in self.row_map)

    def collapse_slope(self, slope) -> tuple:
        """Map a multiplier vector on internal rows to the user's rows."""
        out = [ZERO] * self.m_orig
        for (i, sign), a in zip(self.row_map, slope):
            if a:
                out[i] += sign * a
        return tuple(out)

    def continuous_columns(self):
        return list(range(self.r, self.n))

    def integer_columns(self):
        return list(range(self.r))

    def with_d2(self, d2) -> "SecondStage":
        return replace(self, d2=tuple(d2))


@dataclass(frozen=True)
class TwoStageInstance:
    n1: int
    r1: int
    c: tuple
    A1: tuple
    b1: tuple
    x_lb: tuple
    x_ub: tuple
    n2: int
    r2: int
    d1: tuple
    d2: tuple
    G2: tuple
    y_lb: tuple
    y_ub: tuple
    scenarios: tuple
    sense: SenseTag = field(default_factory=SenseTag)
    offset: Fraction = ZERO
    backmap: Optional[tuple] = None

    @property
    def m1(self) -> int:
        return len(self.A1)

    @property
    def m2(self) -> int:
        return len(self.G2)

    @cached_property
    def second_stage(self) -> SecondStage:
        return SecondStage(self.d1, self.d2, self.G2, self.y_lb, self.y_ub, self.r2,
                           self.sense.row_map2, len(self.sense.rows2))

    @cached_property
    def linking_columns(self) -> tuple:
        cols = set()
        for s in self.scenarios:
            for row in s.A2:
                for j, a in enumerate(row):
                    if a:
                        cols.add(j)
        return tuple(sorted(cols))

    def beta(self, omega: int, x) -> tuple:
        """Internal second-stage right-hand side ``b2 - A2 x`` for scenario ``omega``."""
        s = self.scenarios[omega]
        return tuple(b - dot(row, x) for row, b in zip(s.A2, s.b2))

    def beta_orig(self, omega: int, x) -> tuple:
        """The same right-hand side in the user's row coordinates."""
        internal = self.beta(omega, x)
        out = [None] * len(self.sense.rows2)
        for (i, sign), val in zip(self.sense.row_map2, internal):
            if out[i] is None:
                out[i] = sign * val
        return tuple(out)

    def first_stage_feasible(self, x) -> bool:
        for j, v in enumerate(x):
            if v < self.x_lb[j] or v > self.x_ub[j]:
                return False
            if j < self.r1 and Fraction(v).denominator != 1:
                return False
        return all(dot(row, x) >= b for row, b in zip(self.A1, self.b1))

    def report(self, canonical_value):
        """Objective in the user's sense from a canonical (minimization) value."""
        return -canonical_value if self.sense.stage1_max else canonical_value

    def original_x(self, x) -> tuple:
        if self.backmap is None:
            return tuple(x)
        return tuple(base + sum((w * x[j] for j, w in terms), ZERO) for base, terms in self.backmap)

    @property
    def zero_sum(self) -> bool:
        return all(a == -b for a, b in zip(self.d1, self.d2))


@dataclass
class SolveResult:
    status: str
    x_star: Optional[tuple] = None
    reactions: list = field(default_factory=list)
    objective: object = None
    reported_objective: object = None
    x_original: Optional[tuple] = None
    lower_bound_trace: list = field(default_factory=list)
    cut_log: list = field(default_factory=list)
    iteration_log: list = field(default_factory=list)
    wall_time: float = 0.0
    iterations: int = 0
    algorithm: str = ""
    message: str = ""


# --- validation ---------------------------------------------------------------

def validate_instance(inst: TwoStageInstance, *, allow_continuous_linking: bool = False) -> TwoStageInstance:
    """Check dimensions and standing assumptions; returns ``inst`` unchanged.

    Integer bounds that are not integral are tightened by the caller
    (:func:`build_instance`), so here they must already be integral.
    """
    n1, n2 = inst.n1, inst.n2
    if not 0 <= inst.r1 <= n1 or not 0 <= inst.r2 <= n2:
        raise DimensionError("integer counts must lie between 0 and the number of variables")
    for name, v, n in (("c", inst.c, n1), ("x_lb", inst.x_lb, n1), ("x_ub", inst.x_ub, n1),
                       ("d1", inst.d1, n2), ("d2", inst.d2, n2), ("y_lb", inst.y_lb, n2),
                       ("y_ub", inst.y_ub, n2)):
        if len(v) != n:
            raise DimensionError(f"{name} has length {len(v)}, expected {n}")
    if len(inst.b1) != len(inst.A1):
        raise DimensionError("b1 and A1 have different row counts")
    for row in inst.A1:
        if len(row) != n1:
            raise DimensionError("A1 rows must have n1 entries")
    for row in inst.G2:
        if len(row) != n2:
            raise DimensionError("G2 rows must have n2 entries")
    if not inst.scenarios:
        raise DimensionError("at least one scenario is required")
    total = ZERO
    for k, s in enumerate(inst.scenarios):
        if len(s.A2) != inst.m2 or len(s.b2) != inst.m2:
            raise DimensionError(f"scenario {k}: A2/b2 must have m2 = {inst.m2} rows")
        for row in s.A2:
            if len(row) != n1:
                raise DimensionError(f"scenario {k}: A2 rows must have n1 entries")
        if s.p < 0 or s.p > 1:
            raise AssumptionError(f"scenario {k}: probability {fmt_q(s.p)} outside [0, 1]")
        total += s.p
    if total != 1:
        raise AssumptionError(f"scenario probabilities sum to {fmt_q(total)}, not 1")
    for lb, ub, r, tag in ((inst.x_lb, inst.x_ub, inst.r1, "x"), (inst.y_lb, inst.y_ub, inst.r2, "y")):
        for j, (lo, hi) in enumerate(zip(lb, ub)):
            if lo == -INF or lo == INF:
                raise AssumptionError(f"{tag}{j + 1} needs a finite lower bound")
            if j < r and hi == INF:
                raise AssumptionError(f"integer variable {tag}{j + 1} needs a finite upper bound")
            if j < r and (Fraction(lo).denominator != 1 or Fraction(hi).denominator != 1):
                raise AssumptionError(f"integer variable {tag}{j + 1} has fractional bounds")
    if not allow_continuous_linking:
        for j in inst.linking_columns:
            if j >= inst.r1:
                raise AssumptionError(
                    f"x{j + 1} is continuous but appears in the second-stage constraints")
    return inst


def _tighten(lb, ub, r):
    lb, ub = list(lb), list(ub)
    for j in range(r):
        if lb[j] not in (INF, -INF):
            lb[j] = Fraction(math.ceil(lb[j]))
        if ub[j] not in (INF, -INF):
            ub[j] = Fraction(math.floor(ub[j]))
    return tuple(lb), tuple(ub)


def build_instance(*, c, A1=(), b1=(), x_lb=None, x_ub=None, r1=None,
                   d1=None, d2, G2, y_lb=None, y_ub=None, r2=0, scenarios,
                   stage1="min", stage2="min", rows1=None, rows2=None,
                   allow_continuous_linking=False) -> TwoStageInstance:
    """Assemble a canonical instance from data written in the user's senses.

    ``scenarios`` is a list of ``(p, A2, b2)`` triples.  Missing lower bounds
    default to 0, missing upper bounds to +inf, ``d1`` defaults to ``d2``.
    """
    c = tuple(to_q(v) for v in c)
    n1 = len(c)
    d2 = tuple(to_q(v) for v in d2)
    n2 = len(d2)
    d1 = tuple(to_q(v) for v in d1) if d1 is not None else d2
    r1 = n1 if r1 is None else r1
    A1 = tuple(tuple(to_q(a) for a in row) for row in A1)
    b1 = tuple(to_q(v) for v in b1)
    G2 = tuple(tuple(to_q(a) for a in row) for row in G2)
    x_lb = tuple(to_bound(v, default=ZERO) for v in x_lb) if x_lb is not None else (ZERO,) * n1
    x_ub = tuple(to_bound(v, default=INF) for v in x_ub) if x_ub is not None else (INF,) * n1
    y_lb = tuple(to_bound(v, default=ZERO) for v in y_lb) if y_lb is not None else (ZERO,) * n2
    y_ub = tuple(to_bound(v, default=INF) for v in y_ub) if y_ub is not None else (INF,) * n2
    rows1 = tuple(rows1) if rows1 is not None else (GE,) * len(A1)
    rows2 = tuple(rows2) if rows2 is not None else (GE,) * len(G2)
    for s in rows1 + rows2:
        if s not in _SENSES:
            raise ParseError(f"unknown row sense {s!r}")
    if len(rows1) != len(A1) or len(b1) != len(A1):
        raise DimensionError("stage-one rows, right-hand sides and senses disagree in count")
    if len(rows2) != len(G2):
        raise DimensionError("stage-two rows and senses disagree in count")
    if stage1 not in ("min", "max") or stage2 not in ("min", "max"):
        raise ParseError("objective senses must be 'min' or 'max'")
    s1max, s2max = stage1 == "max", stage2 == "max"
    if s1max:
        c = tuple(-v for v in c)
        d1 = tuple(-v for v in d1)
    if s2max:
        d2 = tuple(-v for v in d2)
    A1c, b1c = expand_rows(A1, b1, rows1)
    G2c, _ = expand_rows(G2, (ZERO,) * len(G2), rows2)
    scen = []
    for k, (p, A2, b2) in enumerate(scenarios):
        A2 = tuple(tuple(to_q(a) for a in row) for row in A2)
        b2 = tuple(to_q(v) for v in b2)
        if len(A2) != len(rows2) or len(b2) != len(rows2):
            raise DimensionError(f"scenario {k}: A2/b2 must have m2 = {len(rows2)} rows")
        A2c, b2c = expand_rows(A2, b2, rows2)
        scen.append(Scenario(to_q(p), A2c, b2c))
    x_lb, x_ub = _tighten(x_lb, x_ub, r1)
    y_lb, y_ub = _tighten(y_lb, y_ub, r2)
    inst = TwoStageInstance(n1, r1, c, A1c, b1c, x_lb, x_ub, n2, r2, d1, d2, G2c,
                            y_lb, y_ub, tuple(scen), SenseTag(s1max, s2max, rows1, rows2))
    return validate_instance(inst, allow_continuous_linking=allow_continuous_linking)


# --- file format --------------------------------------------------------------

def _line_of(text: str, key: str, occurrence: int = 0):
    hits = [m.start() for m in re.finditer(re.escape(f'"{key}"'), text)]
    if not hits:
        return None, None
    pos = hits[min(occurrence, len(hits) - 1)]
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


class _Reader:
    def __init__(self, text, data):
        self.text, self.data = text, data

    def fail(self, key, msg, occurrence=0):
        line, col = _line_of(self.text, key, occurrence)
        raise ParseError(f"field {key!r}: {msg}", line, col)

    def num(self, key, value, occurrence=0):
        if isinstance(value, bool) or isinstance(value, float) or not isinstance(value, (int, str)):
            self.fail(key, f"expected an integer or a 'p/q' string, got {value!r}", occurrence)
        try:
            return to_q(value)
        except (ValueError, ZeroDivisionError, TypeError):
            self.fail(key, f"cannot read {value!r} as a rational number", occurrence)

    def bound(self, key, value, default, occurrence=0):
        if value is None:
            return default
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "-inf", "infinity", "-infinity"):
            return to_bound(value, default=default)
        return self.num(key, value, occurrence)

    def vector(self, key, value, n=None, occurrence=0, bound_default=None):
        if not isinstance(value, list):
            self.fail(key, "expected a list", occurrence)
        if n is not None and len(value) != n:
            line, col = _line_of(self.text, key, occurrence)
            raise DimensionError(f"line {line}: field {key!r} has {len(value)} entries, expected {n}")
        if bound_default is not None:
            return tuple(self.bound(key, v, bound_default, occurrence) for v in value)
        return tuple(self.num(key, v, occurrence) for v in value)

    def matrix(self, key, value, m, n, occurrence=0):
        if not isinstance(value, list):
            self.fail(key, "expected a list of rows", occurrence)
        if len(value) != m:
            line, _ = _line_of(self.text, key, occurrence)
            raise DimensionError(f"line {line}: field {key!r} has {len(value)} rows, expected {m}")
        return tuple(self.vector(key, row, n, occurrence) for row in value)

    def count(self, key):
        v = self.data.get(key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            self.fail(key, "expected a non-negative integer")
        return v

    def senses(self, key, m):
        v = self.data.get(key, GE)
        if isinstance(v, str):
            v = [v] * m
        if not isinstance(v, list) or any(s not in _SENSES for s in v):
            self.fail(key, "expected '>=', '<=', '=' or a list of them")
        if len(v) != m:
            line, _ = _line_of(self.text, key)
            raise DimensionError(f"line {line}: field {key!r} has {len(v)} entries, expected {m}")
        return tuple(v)


_REQUIRED = ("n1", "r1", "m1", "c", "n2", "r2", "m2", "d2", "G2", "scenarios")


def parse_instance(text: str, *, allow_continuous_linking: bool = False) -> TwoStageInstance:
    """Read the JSON instance format; see the README for the field list."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ParseError("top-level value must be an object", 1, 1)
    rd = _Reader(text, data)
    for key in _REQUIRED:
        if key not in data:
            raise ParseError(f"missing required field {key!r}", 1, 1)
    n1, r1, m1 = rd.count("n1"), rd.count("r1"), rd.count("m1")
    n2, r2, m2 = rd.count("n2"), rd.count("r2"), rd.count("m2")
    if r1 > n1:
        rd.fail("r1", "cannot exceed n1")
    if r2 > n2:
        rd.fail("r2", "cannot exceed n2")
    c = rd.vector("c", data["c"], n1)
    A1 = rd.matrix("A1", data.get("A1", []), m1, n1)
    b1 = rd.vector("b1", data.get("b1", []), m1)
    x_lb = rd.vector("x_lb", data.get("x_lb", [0] * n1), n1, bound_default=ZERO)
    x_ub = rd.vector("x_ub", data.get("x_ub", [None] * n1), n1, bound_default=INF)
    d2 = rd.vector("d2", data["d2"], n2)
    d1 = rd.vector("d1", data["d1"], n2) if "d1" in data else d2
    G2 = rd.matrix("G2", data["G2"], m2, n2)
    y_lb = rd.vector("y_lb", data.get("y_lb", [0] * n2), n2, bound_default=ZERO)
    y_ub = rd.vector("y_ub", data.get("y_ub", [None] * n2), n2, bound_default=INF)
    if not isinstance(data["scenarios"], list) or not data["scenarios"]:
        rd.fail("scenarios", "expected a non-empty list")
    scen = []
    for k, s in enumerate(data["scenarios"]):
        if not isinstance(s, dict) or any(key not in s for key in ("p", "A2", "b2")):
            rd.fail("scenarios", f"entry {k} needs fields 'p', 'A2' and 'b2'")
        scen.append((rd.num("p", s["p"], k), rd.matrix("A2", s["A2"], m2, n1, k),
                     rd.vector("b2", s["b2"], m2, k)))
    stage1 = data.get("objective_sense_stage1", "min")
    stage2 = data.get("objective_sense_stage2", "min")
    for key, v in (("objective_sense_stage1", stage1), ("objective_sense_stage2", stage2)):
        if v not in ("min", "max"):
            rd.fail(key, "expected 'min' or 'max'")
    rows1 = rd.senses("row_sense_stage1", m1)
    rows2 = rd.senses("row_sense_stage2", m2)
    inst = build_instance(c=c, A1=A1, b1=b1, x_lb=x_lb, x_ub=x_ub, r1=r1, d1=d1, d2=d2,
                          G2=G2, y_lb=y_lb, y_ub=y_ub, r2=r2, scenarios=scen,
                          stage1=stage1, stage2=stage2, rows1=rows1, rows2=rows2,
                          allow_continuous_linking=allow_continuous_linking)
    if "objective_offset" in data:
        inst = replace(inst, offset=rd.num("objective_offset", data["objective_offset"]))
    return inst


def load_instance(path, **kw) -> TwoStageInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read(), **kw)


def _original_rows(rows, rhs, row_map, m_orig):
    out_rows, out_rhs = [None] * m_orig, [None] * m_orig
    for (i, sign), row, b in zip(row_map, rows, rhs):
        if out_rows[i] is None:
            out_rows[i] = [sign * a for a in row]
            out_rhs[i] = sign * b
    return out_rows, out_rhs


def instance_to_dict(inst: TwoStageInstance) -> dict:
    """Inverse of :func:`parse_instance` (numbers as ``"p/q"`` strings)."""
    tag = inst.sense
    q = lambda v: fmt_q(v)  # noqa: E731
    c = [-v for v in inst.c] if tag.stage1_max else list(inst.c)
    d1 = [-v for v in inst.d1] if tag.stage1_max else list(inst.d1)
    d2 = [-v for v in inst.d2] if tag.stage2_max else list(inst.d2)
    A1, b1 = _original_rows(inst.A1, inst.b1, tag.row_map1, len(tag.rows1))
    G2, _ = _original_rows(inst.G2, (ZERO,) * inst.m2, tag.row_map2, len(tag.rows2))
    scen = []
    for s in inst.scenarios:
        A2, b2 = _original_rows(s.A2, s.b2, tag.row_map2, len(tag.rows2))
        scen.append({"p": q(s.p), "A2": [[q(a) for a in r] for r in A2], "b2": [q(v) for v in b2]})
    out = {
        "n1": inst.n1, "r1": inst.r1, "m1": len(tag.rows1),
        "c": [q(v) for v in c],
        "A1": [[q(a) for a in r] for r in A1], "b1": [q(v) for v in b1],
        "x_lb": [q(v) for v in inst.x_lb], "x_ub": [q(v) for v in inst.x_ub],
        "n2": inst.n2, "r2": inst.r2, "m2": len(tag.rows2),
        "d1": [q(v) for v in d1], "d2": [q(v) for v in d2],
        "G2": [[q(a) for a in r] for r in G2],
        "y_lb": [q(v) for v in inst.y_lb], "y_ub": [q(v) for v in inst.y_ub],
        "scenarios": scen,
        "objective_sense_stage1": "max" if tag.stage1_max else "min",
        "objective_sense_stage2": "max" if tag.stage2_max else "min",
        "row_sense_stage1": list(tag.rows1),
        "row_sense_stage2": list(tag.rows2),
    }
    if inst.offset:
        out["objective_offset"] = q(inst.offset)
    return out


def serialize_instance(inst: TwoStageInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


# --- rewrites -----------------------------------------------------------------

def interdiction_to_2smilp(n: int, G2, b2, d2, u, *, A1=(), b1=(), integer_follower=True,
                           rows1=None) -> TwoStageInstance:
    """Max-min interdiction: binary ``x_i = 1`` removes follower activity ``y_i``.

    The follower solves ``min d2 y  s.t.  G2 y >= b2, 0 <= y <= u (e - x)``;
    the leader maximizes the follower's cost.  The coupling bounds become the
    rows ``-y_i - u_i x_i >= -u_i``.
    """
    u = tuple(to_q(v) for v in u)
    d2 = tuple(to_q(v) for v in d2)
    if len(u) != n or len(d2) != n:
        raise DimensionError("u and d2 must have n entries")
    G2 = [tuple(to_q(a) for a in row) for row in G2]
    b2 = [to_q(v) for v in b2]
    if len(G2) != len(b2) or any(len(row) != n for row in G2):
        raise DimensionError("G2 must be len(b2) x n")
    if any(v < 0 for v in u):
        raise DimensionError("interdiction capacities must be non-negative")
    A2 = [(ZERO,) * n for _ in G2]
    for i in range(n):
        G2.append(tuple(-ONE if j == i else ZERO for j in range(n)))
        A2.append(tuple(-u[i] if j == i else ZERO for j in range(n)))
        b2.append(-u[i])
    return build_instance(
        c=(ZERO,) * n, A1=A1, b1=b1, x_lb=(ZERO,) * n, x_ub=(ONE,) * n, r1=n,
        d1=d2, d2=d2, G2=G2, y_lb=(ZERO,) * n, y_ub=u, r2=n if integer_follower else 0,
        scenarios=[(ONE, A2, b2)], stage1="max", stage2="min", rows1=rows1,
    )


def binarize_linking(inst: TwoStageInstance) -> TwoStageInstance:
    """Replace each general-integer linking variable by a binary expansion.

    ``x_i = lb_i + sum_k 2^k b_k``; when the weights can overshoot the range a
    first-stage row caps the sum.  ``backmap`` records how to recover the
    original coordinates, and ``offset`` absorbs ``c_i lb_i``.
    """
    linking = set(inst.linking_columns)
    for j in linking:
        if j >= inst.r1:
            raise AssumptionError(f"x{j + 1} is a continuous linking variable")
        if inst.x_ub[j] == INF:
            raise AssumptionError(f"x{j + 1} has an infinite upper bound")
    todo = [j for j in sorted(linking) if not (inst.x_lb[j] == 0 and inst.x_ub[j] == 1)]
    if not todo:
        return inst
    # column recipes: (original index, weight) with weight None for a kept column
    new_cols, back = [], []
    for j in range(inst.n1):
        if j in todo:
            R = int(inst.x_ub[j] - inst.x_lb[j])
            terms = []
            for k in range(R.bit_length()):
                terms.append((len(new_cols), Fraction(1 << k)))
                new_cols.append((j, Fraction(1 << k)))
            back.append((inst.x_lb[j], tuple(terms)))
        else:
            back.append((ZERO, ((len(new_cols), ONE),)))
            new_cols.append((j, None))
    r1 = sum(1 for j, _ in new_cols if j < inst.r1)
    shift = [inst.x_lb[j] if j in todo else ZERO for j in range(inst.n1)]

    def remap(row):
        return tuple(row[j] * (w if w is not None else ONE) for j, w in new_cols)

    c = remap(inst.c)
    offset = inst.offset + dot(inst.c, shift)
    A1 = [remap(row) for row in inst.A1]
    b1 = [b - dot(row, shift) for row, b in zip(inst.A1, inst.b1)]
    rows1 = list(inst.sense.rows1)
    for j in todo:
        R = int(inst.x_ub[j] - inst.x_lb[j])
        total = (1 << R.bit_length()) - 1
        if total > R:
            A1.append(tuple(-w if src == j and w is not None else ZERO for src, w in new_cols))
            b1.append(Fraction(-R))
            rows1.append(GE)
    x_lb = tuple(ZERO if w is not None else inst.x_lb[j] for j, w in new_cols)
    x_ub = tuple(ONE if w is not None else inst.x_ub[j] for j, w in new_cols)
    scen = tuple(
        Scenario(s.p, tuple(remap(row) for row in s.A2),
                 tuple(b - dot(row, shift) for row, b in zip(s.A2, s.b2)))
        for s in inst.scenarios
    )
    if inst.backmap is not None:
        # compose with an earlier expansion
        composed = []
        for base, terms in inst.backmap:
            nb, nt = base, []
            for col, w in terms:
                b2_, t2 = back[col]
                nb += w * b2_
                nt.extend((c2, w * w2) for c2, w2 in t2)
            composed.append((nb, tuple(nt)))
        back = composed
    out = replace(inst, n1=len(new_cols), r1=r1, c=c, A1=tuple(A1), b1=tuple(b1),
                  x_lb=x_lb, x_ub=x_ub, scenarios=scen,
                  sense=replace(inst.sense, rows1=tuple(rows1)),
                  offset=offset, backmap=tuple(back))
    return validate_instance(out)
