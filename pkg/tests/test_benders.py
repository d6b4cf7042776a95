from fractions import Fraction as Q

import pytest

from msmilp import bnb
from msmilp.benders import (DualFnCut, MasterState, linearize_master, make_integer_lshaped_cut,
                            solve_generalized_benders, solve_lshaped_continuous)
from msmilp.errors import AssumptionError, UnboundedBoxError
from msmilp.model import INFEASIBLE, OPTIMAL, build_instance
from msmilp.oracle import oracle_solve, random_instance
from msmilp.rational import INF, dot

from conftest import bundled, ex2_stage


def test_ex2_matches_oracle():
    inst = bundled("ex2")
    res = solve_generalized_benders(inst, max_iter=50)
    assert res.status == OPTIMAL
    assert res.objective == Q(-59, 2)
    assert res.x_star == (5, 5)
    trace = res.lower_bound_trace
    assert all(a <= b for a, b in zip(trace, trace[1:]))
    assert res.iterations <= 37
    # termination test: master z equals d1.y for every scenario
    last = res.iteration_log[-1]
    assert last["gap"] == 0
    assert last["sum_pz"] == sum(s.p * dot(inst.d1, y) for s, y in zip(inst.scenarios, res.reactions))


def test_ex4_binarized():
    inst = bundled("ex4")
    with pytest.raises(AssumptionError):
        solve_generalized_benders(inst)
    res = solve_generalized_benders(inst, auto_binarize=True)
    assert res.status == OPTIMAL
    assert res.reported_objective == 3 and res.x_original == (2,)


def test_first_master_sits_at_lower_bound():
    inst = bundled("ex2")
    res = solve_generalized_benders(inst, max_iter=1)
    first = res.iteration_log[0]
    assert first["master_value"] == first["sum_pz"] + dot(inst.c, (5, 5))


def test_pessimistic_rejected():
    with pytest.raises(AssumptionError):
        solve_generalized_benders(bundled("ex2"), mode="pessimistic")


def _dualfn_master_instance(fixed):
    ss = ex2_stage()
    A1 = [[1], [-1]] if fixed is not None else []
    b1 = [fixed, -fixed] if fixed is not None else []
    # beta = b2 - A2 x = x / 2 on the equality row
    return build_instance(c=[0], A1=A1, b1=b1, x_lb=[0], x_ub=[20], d2=ss.d2, G2=[[2, 5, -2, -2, 5, 5]],
                          y_lb=[0] * 6, y_ub=[6, 6, 6, INF, INF, INF], r2=3,
                          scenarios=[(1, [[Q(-1, 2)]], [0])], rows2=["="])


def test_linearized_dual_function_cut():
    inst = _dualfn_master_instance(19)
    ss = inst.second_stage
    tree = bnb.new_tree(ss.d2, ss.G, ss.lower, ss.upper, ss.r)
    bnb.refine_tree(tree, ss.expand((Q(7, 2),)))
    F = bnb.extract_dual_function(tree)
    state = MasterState(inst, [Q(-100)], [[]], [DualFnCut(F)])
    master = linearize_master(state)
    assert master.n_binaries == 2
    assert master.solve(1000).value == Q(-11, 4)


def test_single_piece_cut_has_no_binaries():
    inst = _dualfn_master_instance(None)
    piece = bnb.AffinePiece((Q(1), Q(0)), Q(0))
    state = MasterState(inst, [Q(-100)], [[]], [DualFnCut(bnb.DualFunction(((piece,),)))])
    assert linearize_master(state).n_binaries == 0


def test_unbounded_box_in_encoding():
    inst = build_instance(c=[0], x_lb=[0], x_ub=[INF], r1=0, d2=[1], G2=[[1]], y_lb=[0], y_ub=[INF],
                          r2=0, scenarios=[(1, [[-1]], [0])], allow_continuous_linking=True)
    piece = bnb.AffinePiece((Q(1),), Q(0))
    state = MasterState(inst, [Q(-100)], [[]], [DualFnCut(bnb.DualFunction(((piece,), (piece,))))])
    with pytest.raises(UnboundedBoxError):
        linearize_master(state)


def test_integer_lshaped_cut_algebra():
    cut = make_integer_lshaped_cut((1, 0), 5, 0)
    assert cut.bound((1, 0)) == 5
    assert cut.bound((0, 0)) <= 0 and cut.bound((1, 1)) <= 0 and cut.bound((0, 1)) <= 0
    assert make_integer_lshaped_cut((1, 0), 3, 3).vacuous
    with pytest.raises(AssumptionError):
        make_integer_lshaped_cut((2, 0), 3, 0)


def test_integer_lshaped_cut_below_xi():
    for seed in range(5):
        inst = random_instance(seed, n1=2, n2=2, m2=2)
        rep = oracle_solve(inst)
        from msmilp.benders import scenario_lower_bound
        z_lb = scenario_lower_bound(inst, 0)
        for ref in rep.feasible_x_set:
            cut = make_integer_lshaped_cut(ref, rep.xi[ref], z_lb)
            assert cut.bound(ref) == rep.xi[ref]
            for x in rep.feasible_x_set:
                assert cut.bound(x) <= rep.xi[x]


def test_lshaped_ex1():
    inst = bundled("ex1", allow_continuous_linking=True)
    res = solve_lshaped_continuous(inst)
    assert res.status == OPTIMAL
    assert res.objective == 0 and res.x_star == (0,)
    # with a cost that favours b < 0 the optimum moves to the lower end
    inst2 = build_instance(c=[4], x_lb=[-5], x_ub=[5], r1=0, d2=[6, 7, 5], G2=[[2, -7, 1]],
                           y_lb=[0] * 3, y_ub=[INF] * 3, r2=0, scenarios=[(1, [[-1]], [0])],
                           rows2=["="], allow_continuous_linking=True)
    res2 = solve_lshaped_continuous(inst2)
    assert res2.objective == -15 and res2.x_star == (-5,)


def test_lshaped_feasibility_cut():
    # y <= 1 forces x <= 1
    inst = build_instance(c=[-1], x_lb=[0], x_ub=[3], r1=0, d2=[1], G2=[[-1]], y_lb=[0], y_ub=[INF],
                          r2=0, scenarios=[(1, [[-1]], [-1])], allow_continuous_linking=True)
    res = solve_lshaped_continuous(inst)
    assert any(c["kind"] == "FarkasCut" for c in res.cut_log)
    assert res.x_star == (1,) and res.objective == -1


def test_lshaped_zero_costs():
    inst = build_instance(c=[0], x_lb=[0], x_ub=[3], r1=0, d2=[0], G2=[[1]], y_lb=[0], y_ub=[INF],
                          r2=0, scenarios=[(1, [[1]], [1])], allow_continuous_linking=True)
    res = solve_lshaped_continuous(inst)
    assert res.iterations == 1 and res.objective == 0


def test_lshaped_rejects_integer_recourse():
    with pytest.raises(AssumptionError):
        solve_lshaped_continuous(bundled("ex2"))


def test_infeasible_master_reported():
    inst = build_instance(c=[0], x_lb=[0], x_ub=[1], d2=[1], G2=[[1]], y_lb=[0], y_ub=[1], r2=1,
                          scenarios=[(1, [[-1]], [5])])
    res = solve_generalized_benders(inst)
    assert res.status == INFEASIBLE


def test_random_general_objectives_match_oracle():
    for seed in range(20):
        inst = random_instance(seed, n1=2, n2=2, m2=2, scenarios=2, m1=1)
        rep = oracle_solve(inst)
        res = solve_generalized_benders(inst)
        assert res.objective == rep.value if rep.optimum else res.status == INFEASIBLE


def test_random_same_objectives_match_oracle():
    for seed in range(15):
        base = random_instance(seed, n1=2, n2=2, m2=2, scenarios=2, binary_x=False)
        from dataclasses import replace
        inst = replace(base, d1=base.d2)
        rep = oracle_solve(inst)
        res = solve_generalized_benders(inst)
        if rep.optimum is None:
            assert res.status == INFEASIBLE
        else:
            assert res.objective == rep.value
