from fractions import Fraction as Q

import pytest

from msmilp.errors import CapExceeded
from msmilp.model import build_instance, validate_instance
from msmilp.oracle import oracle_phi, oracle_solve, random_instance
from msmilp.rational import INF, dot

from conftest import bundled, ex2_stage


def test_ex4_feasible_set_and_optimum():
    inst = bundled("ex4")
    rep = oracle_solve(inst)
    pairs = {(x[0], rep.reactions[x][0][0]) for x in rep.feasible_x_set}
    assert pairs == {(0, 2), (1, 0), (2, 3)}
    assert rep.optimum[0] == (2,)
    assert rep.reported_value == 3


def test_empty_first_stage_region():
    inst = build_instance(c=[1], A1=[[1]], b1=[2], x_lb=[0], x_ub=[1], d2=[1], G2=[[1]],
                          y_lb=[0], y_ub=[1], r2=1, scenarios=[(1, [[0]], [0])])
    rep = oracle_solve(inst)
    assert rep.status == "Infeasible" and rep.value == INF


def test_phi_examples():
    ss = ex2_stage()
    assert oracle_phi(ss, (Q(5),)) == 4
    assert oracle_phi(ss, (Q(19, 2),)) == Q(17, 2)


def test_phi_infeasible():
    inst = build_instance(c=[0], x_lb=[0], x_ub=[1], d2=[1], G2=[[1]], y_lb=[0], y_ub=[2], r2=1,
                          scenarios=[(1, [[0]], [0])])
    assert oracle_phi(inst.second_stage, (Q(3),)) == INF


def test_cap():
    with pytest.raises(CapExceeded):
        oracle_solve(bundled("ex2"), cap=1000)


def test_random_instance_deterministic_and_valid():
    for seed in range(20):
        a = random_instance(seed, n1=3, n2=3, m2=2, scenarios=3, zero_sum=seed % 2 == 0, m1=1)
        b = random_instance(seed, n1=3, n2=3, m2=2, scenarios=3, zero_sum=seed % 2 == 0, m1=1)
        assert a == b
        assert validate_instance(a) is a
        if seed % 2 == 0:
            assert a.zero_sum


def test_self_consistency():
    for seed in range(10):
        inst = random_instance(seed, scenarios=2, m1=1)
        rep = oracle_solve(inst)
        values = [dot(inst.c, x) + rep.xi[x] for x in rep.feasible_x_set]
        assert rep.value == min(values, default=INF)
        assert set(rep.feasible_x_set) == {x for x, v in rep.xi.items() if v < INF}
