"""Vectorized numeric evaluation of expression trees.

Every bound name may be a float or a numpy array; all arrays broadcast
together.  Out-of-domain operations raise :class:`DomainError` instead of
producing NaN, unless ``strict=False`` is requested, in which case offending
entries become NaN (used by the rejection sampler).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import Add, Const, Expr, Func, Mul, Pow, Symbol


class DomainError(ArithmeticError):
    pass


class UnboundNameError(KeyError):
    pass


class _Evaluator:
    def __init__(self, point: Mapping[str, object], strict: bool, track_scale: bool):
        self.point = point
        self.strict = strict
        self.track = track_scale
        self.memo: dict[int, tuple[Expr, np.ndarray]] = {}
        self.scale = 0.0

    def bad(self, mask, message, node):
        if not np.any(mask):
            return
        if self.strict:
            raise DomainError(f"{message} in {node}")

    def run(self, e: Expr):
        key = id(e)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        v = self._eval(e)
        self.memo[key] = (e, v)
        if self.track:
            self.scale = np.maximum(self.scale, np.abs(v))
        return v

    def _eval(self, e: Expr):
        if isinstance(e, Const):
            return np.float64(float(e.value))
        if isinstance(e, Symbol):
            try:
                return np.asarray(self.point[e.name], dtype=float)
            except KeyError:
                raise UnboundNameError(e.name) from None
        if isinstance(e, Add):
            out = self.run(e.terms[0])
            for t in e.terms[1:]:
                out = out + self.run(t)
            return out
        if isinstance(e, Mul):
            out = self.run(e.factors[0])
            for f in e.factors[1:]:
                out = out * self.run(f)
            return out
        if isinstance(e, Pow):
            return self._pow(e)
        if isinstance(e, Func):
            return self._func(e)
        raise TypeError(type(e))

    def _pow(self, e: Pow):
        b = self.run(e.base)
        if isinstance(e.exp, Const) and e.exp.value.denominator == 1:
            k = int(e.exp.value)
            if k < 0:
                zero = b == 0
                self.bad(zero, "division by zero", e)
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = 1.0 / np.where(zero, np.nan, b) ** (-k)
                return out
            return b**k
        x = self.run(e.exp)
        neg = b < 0
        self.bad(neg, "negative base with non-integer exponent", e)
        zero_neg = (b == 0) & (x < 0)
        self.bad(zero_neg, "division by zero", e)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.power(np.where(neg | zero_neg, np.nan, b), x)
        self.bad(np.isinf(out), "overflow", e)
        return out

    def _func(self, e: Func):
        u = self.run(e.arg)
        name = e.name
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if name == "sqrt":
                m = u < 0
                self.bad(m, "sqrt of negative", e)
                return np.sqrt(np.where(m, np.nan, u))
            if name == "log":
                m = u <= 0
                self.bad(m, "log of non-positive", e)
                return np.log(np.where(m, np.nan, u))
            if name == "acos":
                m = np.abs(u) > 1
                self.bad(m, "acos outside [-1, 1]", e)
                return np.arccos(np.where(m, np.nan, u))
            if name == "exp":
                out = np.exp(u)
                self.bad(np.isinf(out), "overflow", e)
                return out
            if name == "sin":
                return np.sin(u)
            if name == "cos":
                return np.cos(u)
        raise ValueError(name)


def _check_finite(v, e, strict):
    if strict and not np.all(np.isfinite(v)):
        raise DomainError(f"non-finite value in {e}")


def evaluate(e: Expr, point: Mapping[str, object], *, strict: bool = True):
    """Evaluate ``e`` at ``point``.  Returns a float for scalar input."""
    ev = _Evaluator(point, strict, False)
    v = ev.run(e)
    _check_finite(v, e, strict)
    if np.ndim(v) == 0:
        return float(v)
    return v


def evaluate_many(exprs: Sequence[Expr], point: Mapping[str, object], *, strict: bool = True, shape=None):
    """Evaluate several expressions sharing one memo table.

    With ``shape`` given, every result is broadcast to that shape (constants
    become full arrays)."""
    ev = _Evaluator(point, strict, False)
    out = []
    for e in exprs:
        v = ev.run(e)
        _check_finite(v, e, strict)
        if shape is not None:
            v = np.broadcast_to(np.asarray(v, dtype=float), shape)
        out.append(v)
    return out


def evaluate_with_scale(e: Expr, point: Mapping[str, object]):
    """Evaluate ``e`` and the elementwise max magnitude over all its sub-terms."""
    ev = _Evaluator(point, True, True)
    v = ev.run(e)
    _check_finite(v, e, True)
    return v, ev.scale


_NP_FUNCS = {"sqrt": "np.sqrt", "exp": "np.exp", "log": "np.log", "sin": "np.sin", "cos": "np.cos", "acos": "np.arccos"}


def compile_exprs(exprs: Sequence[Expr], names: Sequence[str]):
    """Generate one numpy function ``f(*arrays) -> list`` for many expressions.

    Structurally equal sub-trees are computed once.  Invalid operations give
    NaN/inf rather than raising; callers inspect finiteness themselves (the
    Monte Carlo engine treats a non-finite coefficient as a domain exit)."""
    names = list(names)
    slot: dict[Expr, str] = {}
    lines: list[str] = []
    args = [f"a{i}" for i in range(len(names))]
    index = {n: a for n, a in zip(names, args)}

    def emit(e: Expr) -> str:
        hit = slot.get(e)
        if hit is not None:
            return hit
        if isinstance(e, Const):
            code = repr(float(e.value))
        elif isinstance(e, Symbol):
            if e.name not in index:
                raise UnboundNameError(e.name)
            code = index[e.name]
        elif isinstance(e, Add):
            code = " + ".join(emit(t) for t in e.terms)
        elif isinstance(e, Mul):
            code = " * ".join(emit(f) for f in e.factors)
        elif isinstance(e, Pow):
            b = emit(e.base)
            if isinstance(e.exp, Const) and e.exp.value.denominator == 1:
                k = int(e.exp.value)
                code = f"{b} ** {k}" if k >= 0 else f"1.0 / ({b} ** {-k})"
            elif is_half(e.exp):
                code = f"np.sqrt({b})"
            else:
                code = f"np.power({b}, {emit(e.exp)})"
        elif isinstance(e, Func):
            code = f"{_NP_FUNCS[e.name]}({emit(e.arg)})"
        else:
            raise TypeError(type(e))
        name = f"v{len(slot)}"
        lines.append(f"    {name} = {code}")
        slot[e] = name
        return name

    outs = [emit(e) for e in exprs]
    src = f"def _f({', '.join(args)}):\n" + "\n".join(lines) + f"\n    return [{', '.join(outs)}]\n"
    env = {"np": np}
    exec(compile(src, "<sdesym-compiled>", "exec"), env)
    raw = env["_f"]

    def run(*arrays):
        with np.errstate(all="ignore"):
            return raw(*arrays)

    run.source = src
    run.names = tuple(names)
    return run


def is_half(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == Fraction(1, 2)
