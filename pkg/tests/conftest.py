import itertools
from importlib import resources

from msmilp.model import SecondStage, parse_instance
from msmilp.rational import INF, dot


def bundled(name, **kw):
    text = (resources.files("msmilp") / "instances" / f"{name}.json").read_text(encoding="utf-8")
    return parse_instance(text, **kw)


def ex1_stage():
    return SecondStage.from_rows([6, 7, 5], [[2, -7, 1]], senses=["="])


def ex2_stage():
    return SecondStage.from_rows([6, 4, 3, 4, 5, 7], [[2, 5, -2, -2, 5, 5]], senses=["="], r=3,
                                 upper=[6, 6, 6, None, None, None])


def argmin_points(ss, beta):
    """All optimal points of a pure-integer second stage, by enumeration (internal rows)."""
    box = [range(int(lo), int(hi) + 1) for lo, hi in zip(ss.lower, ss.upper)]
    best, pts = INF, []
    for y in itertools.product(*box):
        if all(dot(row, y) >= b for row, b in zip(ss.G, beta)):
            v = dot(ss.d2, y)
            if v < best:
                best, pts = v, [y]
            elif v == best:
                pts.append(y)
    return best, pts


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
