import random
from fractions import Fraction as Q

import pytest

from msmilp.errors import ContractError
from msmilp.ratlp import (INFEASIBILITY_EXTENDED, LpInfeasible, LpOptimal, LpProblem, LpUnbounded,
                          dual_feasible_point, extend_infeasible_dual, solve_lp, verify_dual_feasible,
                          verify_farkas, verify_optimal)
from msmilp.rational import INF

from conftest import ex1_stage


def ex1_lp(b):
    ss = ex1_stage()
    return LpProblem(ss.d2, ss.G, ss.expand((Q(b),)), ss.lower, ss.upper), ss


@pytest.mark.parametrize("b, value, dual", [(2, 6, 3), (-7, 7, -1)])
def test_ex1_duals(b, value, dual):
    p, ss = ex1_lp(b)
    res = solve_lp(p)
    assert isinstance(res, LpOptimal)
    assert res.value == value
    assert ss.collapse_slope(res.cert.v) == (dual,)
    assert verify_optimal(p, res.y, res.cert)


def test_ex1_zero_rhs_dual_in_interval():
    p, ss = ex1_lp(0)
    res = solve_lp(p)
    assert res.value == 0
    (v,) = ss.collapse_slope(res.cert.v)
    assert -1 <= v <= 3


def _random_lp(rng):
    n, m = rng.randint(1, 4), rng.randint(1, 4)
    G = [[Q(rng.randint(-5, 5)) for _ in range(n)] for _ in range(m)]
    beta = [Q(rng.randint(-6, 6), rng.randint(1, 3)) for _ in range(m)]
    d = [Q(rng.randint(-3, 6)) for _ in range(n)]
    lower = [Q(rng.randint(-2, 1)) for _ in range(n)]
    upper = [INF if rng.random() < 0.3 else lo + rng.randint(0, 4) for lo in lower]
    return LpProblem(d, G, beta, lower, upper)


def test_random_lps_certificates_verify():
    rng = random.Random(7)
    seen = {LpOptimal: 0, LpInfeasible: 0, LpUnbounded: 0}
    for _ in range(200):
        p = _random_lp(rng)
        res = solve_lp(p)
        seen[type(res)] += 1
        if isinstance(res, LpOptimal):
            assert verify_optimal(p, res.y, res.cert)
            assert res.cert.value(p.beta, p.lower, p.upper) == res.value
        elif isinstance(res, LpInfeasible):
            assert verify_farkas(p, res.ray)
        else:
            r = res.direction
            assert sum(a * b for a, b in zip(p.d, r)) < 0
            assert all(sum(a * b for a, b in zip(row, r)) >= 0 for row in p.G)
            assert all(v >= 0 for v in r)
            assert all(v == 0 or hi == INF for v, hi in zip(r, p.upper))
    assert seen[LpOptimal] > 50 and seen[LpInfeasible] > 10


def test_extend_infeasible_dual_exceeds_target():
    p = LpProblem([1], [[1], [-1]], [1, 0], [0], [INF])
    res = solve_lp(p)
    assert isinstance(res, LpInfeasible)
    base = dual_feasible_point(p)
    for target in (Q(0), Q(10), Q(10**6)):
        cert = extend_infeasible_dual(p, base, res.ray, target)
        assert cert.kind == INFEASIBILITY_EXTENDED
        assert verify_dual_feasible(p, cert)
        assert cert.value(p.beta, p.lower, p.upper) > target


def test_extend_on_ex4_node_beyond_incumbent():
    # follower LP of ex4 at x = 0 with y pinned to [3, 3]: -y >= -2 fails
    p = LpProblem([1], [[1], [-1], [-1], [1]], [2, -2, 3, 3], [3], [3])
    res = solve_lp(p)
    assert isinstance(res, LpInfeasible)
    cert = extend_infeasible_dual(p, dual_feasible_point(p), res.ray, Q(3))
    assert cert.value(p.beta, p.lower, p.upper) > 3


def test_extend_on_feasible_problem_is_contract_error():
    p = LpProblem([1], [[1]], [1], [0], [INF])
    with pytest.raises(ContractError):
        extend_infeasible_dual(p, dual_feasible_point(p), None, Q(0))


def test_unbounded_direction():
    res = solve_lp(LpProblem([-1], [[1]], [0], [0], [INF]))
    assert isinstance(res, LpUnbounded)
