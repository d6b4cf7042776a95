"""Exact rational bounded-variable primal simplex.

Solves ``min d.y  s.t.  G y >= beta,  lower <= y <= upper`` and returns, along
with the primal optimum, a full dual certificate ``(v, v_lo, v_hi)``:

* ``v``    one multiplier per ``>=`` row,
* ``v_lo`` multipliers on the lower bounds,
* ``v_hi`` multipliers on the upper bounds,

so that ``v.beta + v_lo.lower - v_hi.upper`` equals the optimal value.  The row
duals are the reduced costs of the surplus columns and the bound duals are the
positive/negative parts of the structural reduced costs, so no extra solve is
needed.  Infeasible problems yield a Farkas ray in the same format, taken from
the phase-one reduced costs.

Lower bounds must be finite; upper bounds may be ``math.inf``.  Pivoting uses
Bland's rule, which is safe in exact arithmetic.  The tableau works on
``gmpy2.mpq`` for speed; everything crossing the module boundary is a
``Fraction``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from gmpy2 import mpq

from .errors import ContractError, NumericOverflow
from .rational import INF, ZERO, dot

OPTIMAL_BASIS = "OptimalBasis"
INFEASIBILITY_EXTENDED = "InfeasibilityExtended"
FARKAS_RAY = "FarkasRay"

DEFAULT_MAX_BITS = 1 << 14

_MPQ_ZERO = mpq(0)


@dataclass(frozen=True)
class LpProblem:
    d: tuple
    G: tuple
    beta: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        n = len(self.d)
        if len(self.lower) != n or len(self.upper) != n:
            raise ContractError("bound vectors must match the number of columns")
        if len(self.G) != len(self.beta):
            raise ContractError("G and beta have different row counts")
        for row in self.G:
            if len(row) != n:
                raise ContractError("ragged constraint matrix")
        for lo, hi in zip(self.lower, self.upper):
            if isinstance(lo, float):
                raise ContractError("lower bounds must be finite rationals")
            if lo > hi:
                raise ContractError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def m(self) -> int:
        return len(self.beta)

    def with_rhs(self, beta) -> "LpProblem":
        return LpProblem(self.d, self.G, tuple(beta), self.lower, self.upper)

    def with_bounds(self, lower, upper) -> "LpProblem":
        return LpProblem(self.d, self.G, self.beta, tuple(lower), tuple(upper))


@dataclass(frozen=True)
class DualCertificate:
    v: tuple
    v_lo: tuple
    v_hi: tuple
    kind: str = OPTIMAL_BASIS

    def value(self, beta, lower, upper) -> Fraction:
        """``v.beta + v_lo.lower - v_hi.upper`` for the given data."""
        total = dot(self.v, beta)
        for a, lo in zip(self.v_lo, lower):
            if a:
                total += a * lo
        for a, hi in zip(self.v_hi, upper):
            if a:
                if hi == INF:
                    return -INF
                total -= a * hi
        return total

    def slope_and_constant(self, lower, upper) -> tuple[tuple, Fraction]:
        """Affine form in ``beta`` obtained by freezing the bound vectors."""
        const = ZERO
        for a, lo in zip(self.v_lo, lower):
            if a:
                const += a * lo
        for a, hi in zip(self.v_hi, upper):
            if a:
                if hi == INF:
                    raise ContractError("upper-bound dual on an unbounded column")
                const -= a * hi
        return self.v, const

    def combine(self, other: "DualCertificate", lam, kind=None) -> "DualCertificate":
        """``self + lam * other`` componentwise."""
        return DualCertificate(
            tuple(a + lam * b for a, b in zip(self.v, other.v)),
            tuple(a + lam * b for a, b in zip(self.v_lo, other.v_lo)),
            tuple(a + lam * b for a, b in zip(self.v_hi, other.v_hi)),
            kind or self.kind,
        )


@dataclass(frozen=True)
class LpOptimal:
    y: tuple
    value: Fraction
    cert: DualCertificate
    status: str = "optimal"


@dataclass(frozen=True)
class LpInfeasible:
    ray: DualCertificate
    status: str = "infeasible"


@dataclass(frozen=True)
class LpUnbounded:
    y: tuple
    direction: tuple
    status: str = "unbounded"


def _q(x) -> mpq:
    return mpq(x.numerator, x.denominator) if isinstance(x, Fraction) else mpq(x)


def _f(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


class _Tableau:
    """Dense tableau ``B^-1 [G  -I  A_art]`` with explicit basic values.

    Columns ``0..n-1`` are structural, ``n..n+m-1`` are surplus variables with
    bounds ``[0, inf)``, the rest are artificials added only where the initial
    surplus would be negative.
    """

    def __init__(self, d, G, beta, lower, upper, max_bits):
        n, m = len(d), len(beta)
        self.n, self.m = n, m
        self.max_bits = max_bits
        lo = [_q(v) for v in lower] + [_MPQ_ZERO] * m
        hi = [(_q(v) if v != INF else INF) for v in upper] + [INF] * m
        Gq = [[_q(a) for a in row] for row in G]
        rows, basis, xb, art_rows = [], [], [], []
        for i in range(m):
            resid = _q(beta[i]) - sum((a * l for a, l in zip(Gq[i], lo) if a), _MPQ_ZERO)
            if resid <= 0:
                # surplus basic: row multiplied by -1 so the surplus column is +e_i
                row = [-a for a in Gq[i]] + [_MPQ_ZERO] * m
                row[n + i] = mpq(1)
                rows.append(row)
                basis.append(n + i)
                xb.append(-resid)
            else:
                row = list(Gq[i]) + [_MPQ_ZERO] * m
                row[n + i] = mpq(-1)
                rows.append(row)
                art_rows.append(i)
                basis.append(None)
                xb.append(resid)
        self.n_art = len(art_rows)
        for k, i in enumerate(art_rows):
            col = n + m + k
            basis[i] = col
            lo.append(_MPQ_ZERO)
            hi.append(INF)
        for i, row in enumerate(rows):
            row.extend([_MPQ_ZERO] * self.n_art)
        for k, i in enumerate(art_rows):
            rows[i][n + m + k] = mpq(1)
        self.N = n + m + self.n_art
        self.rows, self.basis, self.xb = rows, basis, xb
        self.lo, self.hi = lo, hi
        self.at_upper = [False] * self.N
        self.is_basic = [False] * self.N
        for b in basis:
            self.is_basic[b] = True
        self.excluded = [False] * self.N
        self.d = [_q(v) for v in d]
        self.Gq = Gq

    # --- objective handling -------------------------------------------------
    def set_cost(self, cost):
        self.cost = cost
        rc = list(cost)
        for i, row in enumerate(self.rows):
            cb = cost[self.basis[i]]
            if cb:
                for j, a in enumerate(row):
                    if a:
                        rc[j] -= cb * a
        self.rc = rc

    def nonbasic_value(self, j):
        return self.hi[j] if self.at_upper[j] else self.lo[j]

    def objective(self):
        total = _MPQ_ZERO
        for i, b in enumerate(self.basis):
            if self.cost[b]:
                total += self.cost[b] * self.xb[i]
        for j in range(self.N):
            if not self.is_basic[j] and self.cost[j]:
                total += self.cost[j] * self.nonbasic_value(j)
        return total

    # --- pivoting -----------------------------------------------------------
    def _entering(self):
        rc, at_upper = self.rc, self.at_upper
        for j in range(self.N):
            if self.is_basic[j] or self.excluded[j]:
                continue
            r = rc[j]
            if not r:
                continue
            if (r < 0 and not at_upper[j]) or (r > 0 and at_upper[j]):
                if self.lo[j] == self.hi[j]:
                    continue
                return j
        return None

    def iterate(self):
        """Run primal simplex; returns ``None`` at optimum or the unbounded column."""
        while True:
            j = self._entering()
            if j is None:
                return None
            delta = -1 if self.at_upper[j] else 1
            span = self.hi[j] - self.lo[j] if self.hi[j] != INF else INF
            best_t, best_key, best_row = span, j, None
            for i, row in enumerate(self.rows):
                a = row[j]
                if not a:
                    continue
                k = self.basis[i]
                da = a if delta > 0 else -a
                if da > 0:
                    lim = (self.xb[i] - self.lo[k]) / da
                else:
                    if self.hi[k] == INF:
                        continue
                    lim = (self.hi[k] - self.xb[i]) / (-da)
                if lim < best_t or (lim == best_t and k < best_key):
                    best_t, best_key, best_row = lim, k, i
            if best_t == INF:
                return (j, delta)
            t = best_t
            if t:
                for i, row in enumerate(self.rows):
                    a = row[j]
                    if a:
                        self.xb[i] -= (a if delta > 0 else -a) * t
            if best_row is None:
                self.at_upper[j] = not self.at_upper[j]
                continue
            r = best_row
            k = self.basis[r]
            a_rj = self.rows[r][j]
            da = a_rj if delta > 0 else -a_rj
            entering_value = self.lo[j] + t if delta > 0 else self.hi[j] - t
            self._pivot(r, j)
            self.is_basic[k] = False
            self.at_upper[k] = da < 0
            self.is_basic[j] = True
            self.at_upper[j] = False
            self.basis[r] = j
            self.xb[r] = entering_value
            self._check_size(entering_value)

    def _pivot(self, r, j):
        prow = self.rows[r]
        piv = prow[j]
        if piv != 1:
            inv = 1 / piv
            prow = [a * inv if a else a for a in prow]
            self.rows[r] = prow
        nz = [(c, a) for c, a in enumerate(prow) if a]
        for i, row in enumerate(self.rows):
            if i == r:
                continue
            f = row[j]
            if f:
                for c, a in nz:
                    row[c] -= f * a
        f = self.rc[j]
        if f:
            rc = self.rc
            for c, a in nz:
                rc[c] -= f * a

    def _check_size(self, q):
        if q.numerator.bit_length() > self.max_bits or q.denominator.bit_length() > self.max_bits:
            raise NumericOverflow("rational entries exceed the configured size limit")

    # --- extraction ---------------------------------------------------------
    def structural_values(self):
        y = [self.nonbasic_value(j) for j in range(self.n)]
        for i, b in enumerate(self.basis):
            if b < self.n:
                y[b] = self.xb[i]
        return y

    def certificate(self, kind):
        n, m = self.n, self.m
        v = tuple(_f(self.rc[n + i]) for i in range(m))
        v_lo, v_hi = [], []
        for j in range(n):
            r = self.rc[j] if not self.is_basic[j] else _MPQ_ZERO
            v_lo.append(_f(r) if r > 0 else ZERO)
            v_hi.append(_f(-r) if r < 0 else ZERO)
        return DualCertificate(v, tuple(v_lo), tuple(v_hi), kind)


def solve_lp(p: LpProblem, *, max_bits: int = DEFAULT_MAX_BITS, lexmin: bool = False):
    """Solve ``p`` exactly.

    Returns :class:`LpOptimal`, :class:`LpInfeasible` (with a Farkas ray) or
    :class:`LpUnbounded`.  With ``lexmin`` the returned point is the
    lexicographically smallest optimal solution; the certificate still
    belongs to the first optimal basis found.
    """
    n, m = p.n, p.m
    keep = []
    for i, row in enumerate(p.G):
        if any(row):
            keep.append(i)
        elif p.beta[i] > 0:
            v = [ZERO] * m
            v[i] = Fraction(1)
            return LpInfeasible(DualCertificate(tuple(v), (ZERO,) * n, (ZERO,) * n, FARKAS_RAY))
    G = [p.G[i] for i in keep]
    beta = [p.beta[i] for i in keep]
    tab = _Tableau(p.d, G, beta, p.lower, p.upper, max_bits)
    mk = len(keep)

    def expand(cert):
        v = [ZERO] * m
        for i, val in zip(keep, cert.v):
            v[i] = val
        return DualCertificate(tuple(v), cert.v_lo, cert.v_hi, cert.kind)

    if tab.n_art:
        cost1 = [_MPQ_ZERO] * (n + mk) + [mpq(1)] * tab.n_art
        tab.set_cost(cost1)
        tab.iterate()
        if tab.objective() > 0:
            return LpInfeasible(expand(tab.certificate(FARKAS_RAY)))
        for c in range(n + mk, tab.N):
            tab.hi[c] = _MPQ_ZERO
            if not tab.is_basic[c]:
                tab.excluded[c] = True
    cost2 = list(tab.d) + [_MPQ_ZERO] * (mk + tab.n_art)
    tab.set_cost(cost2)
    unb = tab.iterate()
    y = tab.structural_values()
    if unb is not None:
        j, delta = unb
        direction = [ZERO] * n
        if j < n:
            direction[j] = Fraction(delta)
        for i, b in enumerate(tab.basis):
            if b < n:
                direction[b] = _f(-delta * tab.rows[i][j])
        return LpUnbounded(tuple(_f(v) for v in y), tuple(direction))
    cert = expand(tab.certificate(OPTIMAL_BASIS))
    if lexmin:
        y = _lex_stages(tab)
    yf = tuple(_f(v) for v in y)
    value = dot(p.d, yf)
    return LpOptimal(yf, value, cert)


def _lex_stages(tab: _Tableau):
    """Minimize y_0, y_1, ... in turn without leaving the current optimal face."""

    def freeze():
        for j in range(tab.N):
            if not tab.is_basic[j] and tab.rc[j]:
                tab.excluded[j] = True

    freeze()
    for j in range(tab.n):
        cost = [_MPQ_ZERO] * tab.N
        cost[j] = mpq(1)
        tab.set_cost(cost)
        tab.iterate()
        freeze()
    return tab.structural_values()


# --- certificate verification (independent of the pivoting code) -------------

def verify_dual_feasible(p: LpProblem, cert: DualCertificate) -> bool:
    """Sign conditions and ``v.G_j + v_lo_j - v_hi_j <= d_j`` for every column."""
    if len(cert.v) != p.m or len(cert.v_lo) != p.n or len(cert.v_hi) != p.n:
        return False
    if any(a < 0 for a in cert.v) or any(a < 0 for a in cert.v_lo) or any(a < 0 for a in cert.v_hi):
        return False
    for j in range(p.n):
        if cert.v_hi[j] and p.upper[j] == INF:
            return False
        col = sum((cert.v[i] * p.G[i][j] for i in range(p.m) if cert.v[i]), ZERO)
        if col + cert.v_lo[j] - cert.v_hi[j] > p.d[j]:
            return False
    return True


def verify_optimal(p: LpProblem, y, cert: DualCertificate) -> bool:
    """Primal feasibility of ``y``, dual feasibility of ``cert`` and equal objectives."""
    for j, val in enumerate(y):
        if val < p.lower[j] or val > p.upper[j]:
            return False
    for row, b in zip(p.G, p.beta):
        if dot(row, y) < b:
            return False
    if not verify_dual_feasible(p, cert):
        return False
    return dot(p.d, y) == cert.value(p.beta, p.lower, p.upper)


def verify_farkas(p: LpProblem, ray: DualCertificate) -> bool:
    """``ray >= 0``, ``ray.[G | I | -I] <= 0`` columnwise and positive value."""
    if any(a < 0 for a in ray.v) or any(a < 0 for a in ray.v_lo) or any(a < 0 for a in ray.v_hi):
        return False
    for j in range(p.n):
        if ray.v_hi[j] and p.upper[j] == INF:
            return False
        col = sum((ray.v[i] * p.G[i][j] for i in range(p.m) if ray.v[i]), ZERO)
        if col + ray.v_lo[j] - ray.v_hi[j] > 0:
            return False
    return ray.value(p.beta, p.lower, p.upper) > 0


def dual_feasible_point(p: LpProblem) -> DualCertificate:
    """Some dual-feasible certificate for ``p`` (independent of ``beta``).

    The zero row-dual point works whenever every column with a negative cost has
    a finite upper bound; otherwise the LP is re-solved at a right-hand side that
    is feasible by construction.
    """
    if all(c >= 0 or p.upper[j] != INF for j, c in enumerate(p.d)):
        return DualCertificate(
            (ZERO,) * p.m,
            tuple(c if c > 0 else ZERO for c in p.d),
            tuple(-c if c < 0 else ZERO for c in p.d),
            OPTIMAL_BASIS,
        )
    probe = p.with_rhs(tuple(dot(row, p.lower) for row in p.G))
    res = solve_lp(probe)
    if isinstance(res, LpOptimal):
        return res.cert
    raise ContractError("the dual of this LP is infeasible; no dual-feasible point exists")


def extend_infeasible_dual(p: LpProblem, cert: DualCertificate, ray: DualCertificate,
                           target) -> DualCertificate:
    """Add a multiple of a Farkas ray to a dual-feasible point until its value exceeds ``target``.

    ``target=None`` adds the ray once.
    """
    if ray is None:
        raise ContractError("no infeasibility ray given; the problem must be infeasible")
    ray_val = ray.value(p.beta, p.lower, p.upper)
    if ray_val <= 0:
        raise ContractError("ray does not certify infeasibility of this problem")
    base_val = cert.value(p.beta, p.lower, p.upper)
    if target is None or target == -INF:
        lam = Fraction(1)
    else:
        if isinstance(target, float):
            raise ContractError("target must be a finite rational")
        lam = Fraction(max(0, math.ceil((target - base_val) / ray_val)) + 1)
    return cert.combine(ray, lam, INFEASIBILITY_EXTENDED)


def lp_value(res) -> Fraction | float:
    if isinstance(res, LpOptimal):
        return res.value
    if isinstance(res, LpInfeasible):
        return INF
    return -INF
