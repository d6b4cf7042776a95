"""CSV and JSON writers.

Every rational is written twice, exactly as ``p/q`` and as a decimal in the
adjacent column.  Nothing time-dependent goes into CSV files so repeated runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math

from .rational import fmt_dec, fmt_q


def qv(v) -> str:
    """Vector cell: entries joined by ``;``."""
    return ";".join(fmt_q(a) for a in v)


def qd(v) -> list:
    return [fmt_q(v), fmt_dec(v)]


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))


def _jq(v):
    if v is None:
        return None
    if isinstance(v, (tuple, list)):
        return [_jq(a) for a in v]
    approx = float(v)
    return {"exact": fmt_q(v), "approx": approx if math.isfinite(approx) else None}


def result_to_dict(result) -> dict:
    return {
        "status": result.status,
        "algorithm": result.algorithm,
        "objective": _jq(result.reported_objective),
        "canonical_objective": _jq(result.objective),
        "x": _jq(result.x_original if result.x_original is not None else result.x_star),
        "x_internal": _jq(result.x_star),
        "reactions": [_jq(y) for y in result.reactions],
        "lower_bound_trace": [_jq(v) for v in result.lower_bound_trace],
        "iterations": result.iterations,
        "wall_time": result.wall_time,
        "message": result.message,
    }


def result_json(result) -> str:
    return json.dumps(result_to_dict(result), indent=2, allow_nan=False) + "\n"


ITERATION_HEADER = ["iter", "master_value", "master_value_dec", "sum_pz", "sum_pz_dec",
                    "xi", "xi_dec", "gap", "gap_dec"]


def iteration_rows(result) -> list:
    rows = []
    for e in result.iteration_log:
        rows.append([e["iter"]] + qd(e["master_value"]) + qd(e["sum_pz"]) + qd(e["xi"]) + qd(e["gap"]))
    return rows


BNC_CUT_HEADER = ["node", "scenario", "f", "g", "rhs", "separated_vertex"]
BENDERS_CUT_HEADER = ["iteration", "scenario", "kind", "detail"]


def cut_rows(result):
    """``(header, rows)`` for the result's cut log."""
    if result.algorithm == "bnc":
        rows = [[c["node"], c["scenario"], qv(c["f"]), qv(c["g"]), c["rhs"], qv(c["separated_vertex"])]
                for c in result.cut_log]
        return BNC_CUT_HEADER, rows
    rows = []
    for c in result.cut_log:
        detail = []
        for key in ("groups", "pieces", "terms", "x_ref", "height", "u", "const"):
            if key in c:
                val = c[key]
                if isinstance(val, (tuple, list)):
                    val = qv(val)
                elif not isinstance(val, int):
                    val = fmt_q(val)
                detail.append(f"{key}={val}")
        rows.append([c["iteration"], c["scenario"], c["kind"], " ".join(detail)])
    return BENDERS_CUT_HEADER, rows
