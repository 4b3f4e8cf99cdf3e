"""Infix printing that round-trips through :func:`sdesym.parse.parse`."""

from __future__ import annotations

from fractions import Fraction

from .expr import Add, Const, Expr, Func, Mul, Pow, Symbol

_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5


def _const_text(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def _is_denominator(f: Expr) -> bool:
    return isinstance(f, Pow) and isinstance(f.exp, Const) and f.exp.value < 0


def _text(e: Expr) -> tuple[str, int]:
    """Return (text, precedence of the outermost operator)."""
    if isinstance(e, Const):
        q = e.value
        if q < 0:
            return "-" + _const_text(-q), _NEG
        return _const_text(q), (_MUL if q.denominator != 1 else _ATOM)
    if isinstance(e, Symbol):
        return e.name, _ATOM
    if isinstance(e, Func):
        return f"{e.name}({_text(e.arg)[0]})", _ATOM
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.terms):
            s, p = _text(t)
            if i == 0:
                parts.append(s if p > _ADD else f"({s})")
                continue
            if s.startswith("-") and p in (_NEG, _MUL):
                parts.append(" - " + s[1:])
            else:
                parts.append(" + " + (s if p > _ADD else f"({s})"))
        return "".join(parts), _ADD
    if isinstance(e, Mul):
        return _mul_text(e)
    if isinstance(e, Pow):
        if _is_denominator(e):
            return "1/" + _power_text(Pow(e.base, Const(-e.exp.value))), _MUL
        return _power_text(e), _POW
    raise TypeError(type(e))


def _power_text(e: Pow) -> str:
    if isinstance(e.exp, Const) and e.exp.value == 1:
        return _factor(e.base, _POW + 1)
    base = _factor(e.base, _POW + 1)
    ex, p = _text(e.exp)
    if not (p == _ATOM and not ex.startswith("-")):
        ex = f"({ex})"
    return f"{base}^{ex}"


def _factor(e: Expr, minimum: int) -> str:
    s, p = _text(e)
    if p < minimum or (minimum > _NEG and s.startswith("-")):
        return f"({s})"
    return s


def _mul_text(e: Mul) -> tuple[str, int]:
    fs = list(e.factors)
    sign = ""
    if isinstance(fs[0], Const) and fs[0].value < 0:
        if fs[0].value == -1:
            fs = fs[1:]
        else:
            fs = [Const(-fs[0].value)] + fs[1:]
        sign = "-"
    dens = [i for i, f in enumerate(fs) if _is_denominator(f)]
    split = len(fs)
    if dens and dens == list(range(len(fs) - len(dens), len(fs))):
        split = dens[0]
    num = fs[:split]
    den = fs[split:]
    if num:
        pieces = []
        for i, f in enumerate(num):
            if i == 0 and isinstance(f, Const):
                pieces.append(_const_text(f.value))
            else:
                pieces.append(_factor(f, _MUL + 1))
        out = "*".join(pieces)
    else:
        out = "1"
    for f in den:
        out += "/" + _factor(Pow(f.base, Const(-f.exp.value)), _POW)
    return sign + out, (_NEG if sign else _MUL)


def to_text(e: Expr) -> str:
    return _text(e)[0]
