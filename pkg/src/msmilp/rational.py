"""Rational scalars and vectors.

Every numeric quantity handled by the solvers is a :class:`fractions.Fraction`.
Infinite values (infeasible value-function evaluations, missing upper bounds)
are represented by ``math.inf`` / ``-math.inf``, which compare correctly
against fractions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

Q = Fraction
INF = math.inf

ZERO = Fraction(0)
ONE = Fraction(1)


def to_q(value) -> Fraction:
    """Convert an int, Fraction or ``"p/q"`` string to a Fraction.

    Floats are rejected because they are not exact.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if value.is_integer():
            return Fraction(int(value))
        raise TypeError(f"inexact float {value!r}; write it as a 'p/q' string")
    # gmpy2.mpq and friends implement numbers.Rational
    return Fraction(value)


def to_bound(value, *, default) -> Fraction | float:
    """Bound entry: number, ``"inf"``/``"-inf"`` string or ``None`` (= default)."""
    if value is None:
        return default
    if isinstance(value, float) and math.isinf(value):
        return value
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return INF
    if isinstance(value, str) and value.strip().lower() in ("-inf", "-infinity"):
        return -INF
    return to_q(value)


def vec(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(to_q(v) for v in values)


def mat(rows: Iterable[Iterable]) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(vec(r) for r in rows)


def dot(a: Sequence, b: Sequence):
    total = ZERO
    for x, y in zip(a, b):
        if x and y:
            total += x * y
    return total


def matvec(A: Sequence[Sequence], x: Sequence) -> tuple:
    return tuple(dot(row, x) for row in A)


def is_integral(q) -> bool:
    return getattr(q, "denominator", 1) == 1


def fmt_q(q) -> str:
    """Exact text form: ``"p"`` or ``"p/q"``; infinities as ``"inf"``/``"-inf"``."""
    if isinstance(q, float):
        if math.isinf(q):
            return "inf" if q > 0 else "-inf"
        q = Fraction(q)
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def fmt_dec(q, digits: int = 12) -> str:
    """Decimal approximation for human readers; never used in decisions."""
    if isinstance(q, float) and math.isinf(q):
        return "inf" if q > 0 else "-inf"
    return f"{float(q):.{digits}g}"


def parse_q_or_inf(text: str):
    t = text.strip().lower()
    if t in ("inf", "+inf"):
        return INF
    if t == "-inf":
        return -INF
    return Fraction(t)
