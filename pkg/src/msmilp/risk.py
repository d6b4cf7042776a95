"""Reaction and risk functions by exact lexicographic optimization.

Phase one computes the second-stage optimum ``phi(beta)``; phase two optimizes
the first-stage evaluation ``d1.y`` over the second-stage argmin set, which is
imposed exactly as the pair of rows ``d2.y >= phi`` and ``-d2.y >= -phi``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

from . import bnb
from .model import SecondStage, TwoStageInstance
from .rational import INF, ZERO, dot

OPTIMISTIC = "Optimistic"
PESSIMISTIC = "Pessimistic"


@dataclass(frozen=True)
class ReactionResult:
    phi_value: object
    reaction_value: object
    y: tuple
    mode: str


def _mode(mode: str) -> str:
    m = mode.capitalize()
    if m not in (OPTIMISTIC, PESSIMISTIC):
        raise ValueError(f"unknown mode {mode!r}")
    return m


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MSMILP_THREADS", "1")))
    except ValueError:
        return 1


@lru_cache(maxsize=8192)
def _rho(ss: SecondStage, beta: tuple, mode: str, node_limit: int):
    first = bnb.solve_milp(ss.d2, ss.G, beta, ss.lower, ss.upper, ss.r, node_limit=node_limit)
    if first.status != "optimal":
        return INF
    phi = first.value
    if ss.d1 == ss.d2:
        return ReactionResult(phi, phi, first.y, mode)
    sign = 1 if mode == OPTIMISTIC else -1
    obj = tuple(sign * a for a in ss.d1)
    G = ss.G + (ss.d2, tuple(-a for a in ss.d2))
    rhs = tuple(beta) + (phi, -phi)
    second = bnb.solve_milp(obj, G, rhs, ss.lower, ss.upper, ss.r, node_limit=node_limit)
    # the phase-one optimum is feasible here, so phase two cannot fail
    y = second.y
    return ReactionResult(phi, dot(ss.d1, y), y, mode)


def rho_internal(ss: SecondStage, beta, mode=OPTIMISTIC, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    return _rho(ss, tuple(beta), _mode(mode), node_limit)


def eval_rho(ss: SecondStage, beta, mode=OPTIMISTIC, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Best (optimistic) or worst (pessimistic) ``d1.y`` over the second-stage argmin.

    Returns a :class:`ReactionResult`, or ``math.inf`` when no reaction exists.
    """
    return rho_internal(ss, ss.expand(beta), mode, node_limit=node_limit)


def scenario_reaction(inst: TwoStageInstance, omega: int, x, mode=OPTIMISTIC,
                      *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    return rho_internal(inst.second_stage, inst.beta(omega, x), mode, node_limit=node_limit)


def eval_xi_omega(inst: TwoStageInstance, omega: int, x, mode=OPTIMISTIC,
                  *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Scenario risk: the reaction value at ``beta = b2 - A2 x`` (``inf`` if none)."""
    res = scenario_reaction(inst, omega, x, mode, node_limit=node_limit)
    return INF if res == INF else res.reaction_value


def all_reactions(inst: TwoStageInstance, x, mode=OPTIMISTIC, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Per-scenario reaction results, fanned out over ``MSMILP_THREADS`` workers."""
    x = tuple(x)
    jobs = range(len(inst.scenarios))
    workers = worker_count()
    if workers == 1 or len(inst.scenarios) == 1:
        return [scenario_reaction(inst, w, x, mode, node_limit=node_limit) for w in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda w: scenario_reaction(inst, w, x, mode, node_limit=node_limit), jobs))


def xi_from_reactions(inst: TwoStageInstance, reactions):
    total = ZERO
    for s, res in zip(inst.scenarios, reactions):
        if res == INF:
            return INF
        total += s.p * res.reaction_value
    return total


def eval_xi(inst: TwoStageInstance, x, mode=OPTIMISTIC, *, node_limit=bnb.DEFAULT_NODE_LIMIT):
    """Expected scenario risk; ``inf`` as soon as one scenario has no reaction."""
    return xi_from_reactions(inst, all_reactions(inst, x, mode, node_limit=node_limit))


def xi_grid_rows(inst: TwoStageInstance, points, mode=OPTIMISTIC):
    """Rows ``(x, xi)`` for CSV export."""
    return [(tuple(x), eval_xi(inst, x, mode)) for x in points]
