"""Branch and bound over ``min d.y, G y >= beta`` with a persistent tree.

The tree keeps every node's dual certificates, so after a solve it yields a
min-of-affine function of ``beta`` that bounds the value function from below
and is exact at the solved right-hand side.  ``refine_tree`` continues the
search from the existing leaves for a new right-hand side instead of starting
over.

Determinism: the branching variable is the most fractional integer column
(lowest index on ties), the down branch gets ``y_j <= floor``, node selection
is best-bound with lowest id on ties.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import ContractError, NodeLimit, TreeIncomplete, UnboundedError
from .rational import INF, ZERO, dot, fmt_q, parse_q_or_inf
from .ratlp import (DualCertificate, LpInfeasible, LpProblem, LpUnbounded,
                    dual_feasible_point, extend_infeasible_dual, solve_lp)

BRANCHED = "Branched"
INTEGRAL_LEAF = "IntegralLeaf"
INFEASIBLE_LEAF = "InfeasibleLeaf"
PRUNED = "PrunedByBound"
OPEN = "OpenLeaf"

LEAF_MIN = "LeafMin"
PATH_MIN = "PathStrengthenedMin"

TREE_FORMAT = "msmilp-bnb-tree/1"
DEFAULT_NODE_LIMIT = 20000


@dataclass
class BnbNode:
    id: int
    parent: Optional[int]
    branch: Optional[tuple]  # (j, "down" | "up", pi0)
    lower: tuple
    upper: tuple
    depth: int = 0
    status: str = OPEN
    certs: list = field(default_factory=list)  # [(beta, DualCertificate)]
    lp_value: object = None
    y: Optional[tuple] = None
    ray: Optional[DualCertificate] = None
    children: list = field(default_factory=list)
    solved_beta: Optional[tuple] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class BnbTree:
    d: tuple
    G: tuple
    lower: tuple
    upper: tuple
    r: int
    nodes: list = field(default_factory=list)
    incumbent: Optional[tuple] = None  # (y, value) for the latest beta
    beta: Optional[tuple] = None
    evaluated_rhs_log: list = field(default_factory=list)
    node_limit: int = DEFAULT_NODE_LIMIT
    _dual_base: Optional[DualCertificate] = None

    @property
    def leaves(self) -> list:
        return [nd for nd in self.nodes if nd.is_leaf]

    @property
    def value(self):
        return self.incumbent[1] if self.incumbent else INF

    def problem(self, node: BnbNode, beta) -> LpProblem:
        return LpProblem(self.d, self.G, tuple(beta), node.lower, node.upper)

    def dual_base(self) -> DualCertificate:
        if self._dual_base is None:
            self._dual_base = dual_feasible_point(LpProblem(self.d, self.G, (ZERO,) * len(self.G),
                                                            self.lower, self.upper))
        return self._dual_base

    def path(self, node: BnbNode) -> list:
        out = []
        cur = node
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur.parent] if cur.parent is not None else None
        return out[::-1]


@dataclass(frozen=True)
class MilpResult:
    status: str  # "optimal" | "infeasible"
    y: Optional[tuple]
    value: object
    tree: BnbTree


# --- search ------------------------------------------------------------------

def _fractional_column(tree: BnbTree, y) -> Optional[int]:
    best, best_gap = None, None
    half = Fraction(1, 2)
    for j in range(tree.r):
        f = y[j] - math.floor(y[j])
        if f:
            gap = abs(f - half)
            if best_gap is None or gap < best_gap:
                best, best_gap = j, gap
    return best


def _solve_node(tree: BnbTree, node: BnbNode, beta) -> None:
    res = solve_lp(tree.problem(node, beta))
    node.solved_beta = beta
    if isinstance(res, LpInfeasible):
        node.status = INFEASIBLE_LEAF
        node.lp_value = INF
        node.y = None
        node.ray = res.ray
        return
    if isinstance(res, LpUnbounded):
        raise UnboundedError("LP relaxation is unbounded; bound the second-stage variables")
    node.lp_value = res.value
    node.y = res.y
    node.ray = None
    node.certs.append((beta, res.cert))
    node.status = INTEGRAL_LEAF if _fractional_column(tree, res.y) is None else OPEN


def _latest_bound(node: BnbNode, beta):
    if not node.certs:
        return -INF
    return node.certs[-1][1].value(beta, node.lower, node.upper)


def _new_node(tree: BnbTree, parent: BnbNode, j, side, pi0) -> BnbNode:
    lower, upper = list(parent.lower), list(parent.upper)
    if side == "down":
        upper[j] = Fraction(pi0)
    else:
        lower[j] = Fraction(pi0 + 1)
    node = BnbNode(len(tree.nodes), parent.id, (j, side, pi0), tuple(lower), tuple(upper),
                   parent.depth + 1)
    tree.nodes.append(node)
    parent.children.append(node.id)
    if len(tree.nodes) > tree.node_limit:
        raise NodeLimit(f"branch and bound exceeded {tree.node_limit} nodes")
    return node


def _search(tree: BnbTree, beta) -> None:
    beta = tuple(beta)
    tree.beta = beta
    tree.incumbent = None
    U = INF
    heap = []

    def push(node, key):
        heapq.heappush(heap, (key, node.id))

    def offer(node):
        nonlocal U
        if node.status == INTEGRAL_LEAF and node.lp_value < U:
            U = node.lp_value
            tree.incumbent = (node.y, node.lp_value)

    for node in tree.leaves:
        push(node, _latest_bound(node, beta))

    while heap:
        key, nid = heap[0]
        if key >= U:
            break
        heapq.heappop(heap)
        node = tree.nodes[nid]
        if node.solved_beta != beta:
            _solve_node(tree, node, beta)
            if node.status == OPEN:
                push(node, node.lp_value)
            else:
                offer(node)
            continue
        if node.status == INTEGRAL_LEAF:
            offer(node)
            continue
        if node.status == INFEASIBLE_LEAF:
            continue
        # fractional node solved at this beta whose bound is below the incumbent
        j = _fractional_column(tree, node.y)
        pi0 = math.floor(node.y[j])
        node.status = BRANCHED
        for side in ("down", "up"):
            child = _new_node(tree, node, j, side, pi0)
            _solve_node(tree, child, beta)
            if child.status == OPEN:
                push(child, child.lp_value)
            else:
                offer(child)

    for _, nid in heap:
        node = tree.nodes[nid]
        if node.status == OPEN and node.solved_beta == beta:
            node.status = PRUNED

    target = U if U != INF else None
    base = None
    for node in tree.leaves:
        if node.status == INFEASIBLE_LEAF and node.solved_beta == beta:
            if node.certs and node.certs[-1][0] == beta and (
                    target is None or _latest_bound(node, beta) > target):
                continue
            if base is None:
                base = tree.dual_base()
            cert = extend_infeasible_dual(tree.problem(node, beta), base, node.ray, target)
            node.certs.append((beta, cert))
    if U != INF:
        tree.evaluated_rhs_log.append(beta)


def new_tree(d, G, lower, upper, r, *, node_limit=DEFAULT_NODE_LIMIT) -> BnbTree:
    tree = BnbTree(tuple(d), tuple(tuple(row) for row in G), tuple(lower), tuple(upper), r,
                   node_limit=node_limit)
    for j in range(r):
        if lower[j] == -INF or upper[j] == INF:
            raise ContractError(f"integer column {j} needs finite bounds")
    tree.nodes.append(BnbNode(0, None, None, tuple(lower), tuple(upper)))
    return tree


def solve_milp(d, G, beta, lower, upper, r, *, node_limit=DEFAULT_NODE_LIMIT) -> MilpResult:
    """Minimize ``d.y`` over ``G y >= beta``, bounds, ``y_0..y_{r-1}`` integer."""
    tree = new_tree(d, G, lower, upper, r, node_limit=node_limit)
    return _result(refine_tree(tree, beta))


def _result(tree: BnbTree) -> MilpResult:
    if tree.incumbent is None:
        return MilpResult("infeasible", None, INF, tree)
    return MilpResult("optimal", tree.incumbent[0], tree.incumbent[1], tree)


def refine_tree(tree: BnbTree, beta) -> BnbTree:
    """Continue the search so the tree's dual function becomes strong at ``beta``.

    Mutates ``tree`` in place and returns it.  Leaves whose stored bound at
    ``beta`` is already no better than the new incumbent are not touched.
    """
    _search(tree, beta)
    return tree


def tree_result(tree: BnbTree) -> MilpResult:
    return _result(tree)


# --- dual functions -----------------------------------------------------------

@dataclass(frozen=True)
class AffinePiece:
    slope: tuple
    const: Fraction

    def __call__(self, beta):
        return dot(self.slope, beta) + self.const


@dataclass(frozen=True)
class DualFunction:
    """``min`` over groups of ``max`` over the group's affine pieces."""

    groups: tuple
    mode: str = LEAF_MIN

    @property
    def pieces(self) -> tuple:
        seen, out = set(), []
        for g in self.groups:
            for p in g:
                if p not in seen:
                    seen.add(p)
                    out.append(p)
        return tuple(out)

    def __call__(self, beta):
        best = INF
        for g in self.groups:
            v = max(p(beta) for p in g)
            if v < best:
                best = v
        return best

    def collapse(self, row_map, m_orig) -> "DualFunction":
        """Express slopes in the user's row coordinates."""

        def fold(slope):
            out = [ZERO] * m_orig
            for (i, sign), a in zip(row_map, slope):
                if a:
                    out[i] += sign * a
            return tuple(out)

        return DualFunction(tuple(tuple(dict.fromkeys(AffinePiece(fold(p.slope), p.const) for p in g))
                                  for g in self.groups), self.mode)


def _piece(cert: DualCertificate, node: BnbNode) -> AffinePiece:
    slope, const = cert.slope_and_constant(node.lower, node.upper)
    return AffinePiece(tuple(slope), const)


def extract_dual_function(tree: BnbTree, mode: str = LEAF_MIN) -> DualFunction:
    groups = []
    for leaf in tree.leaves:
        if not leaf.certs:
            raise TreeIncomplete(f"leaf {leaf.id} has no certificate")
        if mode == LEAF_MIN:
            groups.append((_piece(leaf.certs[-1][1], leaf),))
        elif mode == PATH_MIN:
            pieces = []
            for nd in tree.path(leaf):
                for _, cert in nd.certs:
                    pieces.append(_piece(cert, leaf))
            groups.append(tuple(dict.fromkeys(pieces)))
        else:
            raise ValueError(f"unknown dual function mode {mode!r}")
    return DualFunction(tuple(groups), mode)


def eval_dual_function(F: DualFunction, beta):
    if not isinstance(beta, (tuple, list)):
        beta = (beta,)
    return F(tuple(beta))


def leaf_partition_ok(tree: BnbTree) -> bool:
    """Check that every branched node's children split its box exactly."""
    for nd in tree.nodes:
        if nd.is_leaf:
            continue
        if len(nd.children) != 2:
            return False
        down, up = (tree.nodes[c] for c in nd.children)
        j, _, pi0 = down.branch
        for k in range(len(tree.d)):
            if k == j:
                if not (down.lower[k] == nd.lower[k] and down.upper[k] == pi0
                        and up.lower[k] == pi0 + 1 and up.upper[k] == nd.upper[k]):
                    return False
            elif not (down.lower[k] == up.lower[k] == nd.lower[k]
                      and down.upper[k] == up.upper[k] == nd.upper[k]):
                return False
    return True


# --- persistence --------------------------------------------------------------

def _qs(v):
    return [fmt_q(a) for a in v]


def _cert_json(beta, cert):
    return {"beta": _qs(beta), "v": _qs(cert.v), "v_lo": _qs(cert.v_lo), "v_hi": _qs(cert.v_hi),
            "kind": cert.kind}


def tree_to_json(tree: BnbTree) -> str:
    data = {
        "format": TREE_FORMAT,
        "d": _qs(tree.d), "G": [_qs(r) for r in tree.G],
        "lower": _qs(tree.lower), "upper": _qs(tree.upper), "r": tree.r,
        "node_limit": tree.node_limit,
        "beta": _qs(tree.beta) if tree.beta is not None else None,
        "incumbent": ({"y": _qs(tree.incumbent[0]), "value": fmt_q(tree.incumbent[1])}
                      if tree.incumbent else None),
        "evaluated_rhs_log": [_qs(b) for b in tree.evaluated_rhs_log],
        "nodes": [
            {
                "id": nd.id, "parent": nd.parent,
                "branch": list(nd.branch) if nd.branch else None,
                "lower": _qs(nd.lower), "upper": _qs(nd.upper), "depth": nd.depth,
                "status": nd.status,
                "certs": [_cert_json(b, c) for b, c in nd.certs],
                "lp_value": fmt_q(nd.lp_value) if nd.lp_value is not None else None,
                "y": _qs(nd.y) if nd.y is not None else None,
                "ray": _cert_json((), nd.ray) if nd.ray is not None else None,
                "children": nd.children,
                "solved_beta": _qs(nd.solved_beta) if nd.solved_beta is not None else None,
            }
            for nd in tree.nodes
        ],
    }
    return json.dumps(data, indent=1) + "\n"


def _vq(v):
    return tuple(parse_q_or_inf(a) for a in v)


def _cert_from(d):
    return _vq(d["beta"]), DualCertificate(_vq(d["v"]), _vq(d["v_lo"]), _vq(d["v_hi"]), d["kind"])


def tree_from_json(text: str) -> BnbTree:
    data = json.loads(text)
    if data.get("format") != TREE_FORMAT:
        raise ValueError(f"not a {TREE_FORMAT} snapshot")
    tree = BnbTree(_vq(data["d"]), tuple(_vq(r) for r in data["G"]), _vq(data["lower"]),
                   _vq(data["upper"]), data["r"], node_limit=data["node_limit"])
    tree.beta = _vq(data["beta"]) if data["beta"] is not None else None
    if data["incumbent"]:
        tree.incumbent = (_vq(data["incumbent"]["y"]), parse_q_or_inf(data["incumbent"]["value"]))
    tree.evaluated_rhs_log = [_vq(b) for b in data["evaluated_rhs_log"]]
    for nd in data["nodes"]:
        node = BnbNode(nd["id"], nd["parent"], tuple(nd["branch"]) if nd["branch"] else None,
                       _vq(nd["lower"]), _vq(nd["upper"]), nd["depth"], nd["status"])
        node.certs = [_cert_from(c) for c in nd["certs"]]
        node.lp_value = parse_q_or_inf(nd["lp_value"]) if nd["lp_value"] is not None else None
        node.y = _vq(nd["y"]) if nd["y"] is not None else None
        node.ray = _cert_from(nd["ray"])[1] if nd["ray"] is not None else None
        node.children = list(nd["children"])
        node.solved_beta = _vq(nd["solved_beta"]) if nd["solved_beta"] is not None else None
        tree.nodes.append(node)
    return tree


def dual_function_rows(F: DualFunction) -> list:
    """CSV rows ``(group, piece, mode, const, slope_1..slope_m)``."""
    rows = []
    for gi, g in enumerate(F.groups):
        for pi, p in enumerate(g):
            rows.append([gi, pi, F.mode, fmt_q(p.const)] + [fmt_q(a) for a in p.slope])
    return rows
