"""Immutable symbolic expression trees.

Nodes are built through the smart constructors (``add``, ``mul``, ``power``,
``func``) or the overloaded operators, which apply only local rewrites:
constant folding, flattening, 0/1 identities and merging of integer powers of
a common base.  Nothing here tries to reach a canonical form; identities are
decided numerically by :func:`sdesym.sampling.equiv_zero`.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational, Real
from typing import Iterable, Mapping, Sequence

FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos", "acos")


class Expr:
    __slots__ = ("_hash", "_free")

    def __setattr__(self, key, value):
        raise AttributeError("Expr nodes are immutable")

    def _init(self, **fields):
        for k, v in fields.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "_hash", hash((type(self).__name__, self._key())))
        object.__setattr__(self, "_free", None)

    def _key(self):
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return type(self) is type(other) and self._key() == other._key()

    def __ne__(self, other):
        return not self == other

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        from .printing import to_text

        return to_text(self)

    def __repr__(self):
        return f"Expr({self})"

    @property
    def free(self) -> frozenset[str]:
        """Names of all variables and parameters occurring in the tree."""
        if self._free is None:
            names = set()
            for node in walk(self):
                if isinstance(node, Symbol):
                    names.add(node.name)
            object.__setattr__(self, "_free", frozenset(names))
        return self._free


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self._init(value=Fraction(value))

    def _key(self):
        return self.value


class Symbol(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self._init(name=name)

    def _key(self):
        return self.name


class Var(Symbol):
    __slots__ = ()


class Param(Symbol):
    __slots__ = ()


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple):
        self._init(terms=tuple(terms))

    def _key(self):
        return self.terms

    def children(self):
        return self.terms


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        self._init(factors=tuple(factors))

    def _key(self):
        return self.factors

    def children(self):
        return self.factors


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: Expr):
        self._init(base=base, exp=exp)

    def _key(self):
        return (self.base, self.exp)

    def children(self):
        return (self.base, self.exp)


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self._init(name=name, arg=arg)

    def _key(self):
        return (self.name, self.arg)

    def children(self):
        return (self.arg,)


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)
HALF = Const(Fraction(1, 2))


def walk(e: Expr):
    """Yield every distinct node of ``e`` once (shared subtrees visited once)."""
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(node.children())


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(x, Rational):
        return Const(Fraction(x))
    if isinstance(x, float):
        return Const(Fraction(x))
    if isinstance(x, Real):
        return Const(Fraction(float(x)))
    if isinstance(x, str):
        from .parse import parse

        return parse(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def is_const(e: Expr, value=None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    """Split ``c * rest`` into (c, rest)."""
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        return e.factors[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return Fraction(1), e


def add(*terms) -> Expr:
    flat: list[Expr] = []
    for t in terms:
        t = as_expr(t)
        if isinstance(t, Add):
            flat.extend(t.terms)
        elif isinstance(t, Mul) and len(t.factors) == 2 and isinstance(t.factors[0], Const) and isinstance(t.factors[1], Add):
            # c*(a + b) inside a sum: distribute so that terms can cancel
            c = t.factors[0]
            flat.extend(mul(c, s) for s in t.factors[1].terms)
        else:
            flat.append(t)
    const = Fraction(0)
    coeffs: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    for t in flat:
        if isinstance(t, Const):
            const += t.value
            continue
        c, core = _split_coeff(t)
        if core in coeffs:
            coeffs[core] += c
        else:
            coeffs[core] = c
            order.append(core)
    out: list[Expr] = []
    for core in order:
        c = coeffs[core]
        if c == 0:
            continue
        out.append(core if c == 1 else mul(Const(c), core))
    if const != 0:
        out.append(Const(const))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Add(tuple(out))


def _int_exponent(e: Expr):
    if isinstance(e, Const) and e.value.denominator == 1:
        return int(e.value)
    return None


def _base_exp(e: Expr) -> tuple[Expr, Expr]:
    if isinstance(e, Pow):
        return e.base, e.exp
    return e, ONE


def _factor_rank(f: Expr):
    # symbols and their powers first, by name; everything else keeps its order
    base = f.base if isinstance(f, Pow) and isinstance(f.exp, Const) else f
    if isinstance(base, Symbol):
        return (0, base.name)
    return (1, "")


def mul(*factors) -> Expr:
    flat: list[Expr] = []
    for f in factors:
        f = as_expr(f)
        if isinstance(f, Mul):
            flat.extend(f.factors)
        else:
            flat.append(f)
    const = Fraction(1)
    powers: dict[Expr, int] = {}
    order: list[Expr] = []
    others: list[Expr] = []
    for f in flat:
        if isinstance(f, Const):
            const *= f.value
            continue
        base, exp = _base_exp(f)
        k = _int_exponent(exp)
        if k is None:
            others.append(f)
            order.append(f)
            continue
        if base in powers:
            powers[base] += k
        else:
            powers[base] = k
            order.append(base)
    if const == 0:
        return ZERO
    out: list[Expr] = []
    emitted = set()
    for item in order:
        if item in powers and item not in emitted:
            emitted.add(item)
            k = powers[item]
            if k == 0:
                continue
            out.append(item if k == 1 else power(item, k))
        elif item not in powers:
            out.append(item)
    # folding may have produced new constants (e.g. 2^-1)
    rest: list[Expr] = []
    for f in out:
        if isinstance(f, Const):
            const *= f.value
        else:
            rest.append(f)
    if const == 0:
        return ZERO
    rest.sort(key=_factor_rank)
    if const != 1:
        rest.insert(0, Const(const))
    if not rest:
        return ONE
    if len(rest) == 1:
        return rest[0]
    return Mul(tuple(rest))


def _exact_root(q: Fraction, k: int):
    """Exact k-th root of a non-negative rational, or None."""
    if q < 0:
        return None
    num, den = q.numerator, q.denominator
    rn = round(num ** (1.0 / k)) if num else 0
    rd = round(den ** (1.0 / k))
    for a in (rn - 1, rn, rn + 1):
        for b in (rd - 1, rd, rd + 1):
            if a >= 0 and b > 0 and a**k == num and b**k == den:
                return Fraction(a, b)
    return None


def power(base, exp) -> Expr:
    base, exp = as_expr(base), as_expr(exp)
    if is_const(exp, 0):
        return ONE
    if is_const(exp, 1):
        return base
    if is_const(base, 1):
        return ONE
    k = _int_exponent(exp)
    if isinstance(base, Const) and isinstance(exp, Const):
        if k is not None:
            if base.value == 0 and k < 0:
                return Pow(base, exp)
            return Const(base.value**k)
        root = _exact_root(base.value, exp.value.denominator)
        if root is not None:
            return Const(root**exp.value.numerator) if root != 0 or exp.value > 0 else Pow(base, exp)
        return Pow(base, exp)
    if isinstance(base, Pow) and k is not None:
        return power(base.base, mul(base.exp, exp))
    if k is not None and isinstance(base, Mul) and isinstance(base.factors[0], Const):
        c = base.factors[0].value
        if c != 0:
            rest = base.factors[1:]
            return mul(Const(c**k), power(rest[0] if len(rest) == 1 else Mul(rest), exp))
    return Pow(base, exp)


def neg(e) -> Expr:
    return mul(MINUS_ONE, e)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def div(a, b) -> Expr:
    return mul(a, power(b, MINUS_ONE))


def func(name: str, arg) -> Expr:
    arg = as_expr(arg)
    if isinstance(arg, Const):
        v = arg.value
        if name == "sqrt":
            root = _exact_root(v, 2)
            if root is not None:
                return Const(root)
        elif name == "exp" and v == 0:
            return ONE
        elif name == "log" and v == 1:
            return ZERO
        elif name == "sin" and v == 0:
            return ZERO
        elif name == "cos" and v == 0:
            return ONE
        elif name == "acos" and v == 1:
            return ZERO
    if name == "log" and isinstance(arg, Func) and arg.name == "exp":
        return arg.arg
    return Func(name, arg)


def sqrt(e) -> Expr:
    return func("sqrt", e)


def exp(e) -> Expr:
    return func("exp", e)


def log(e) -> Expr:
    return func("log", e)


def sin(e) -> Expr:
    return func("sin", e)


def cos(e) -> Expr:
    return func("cos", e)


def acos(e) -> Expr:
    return func("acos", e)


def var(name: str) -> Var:
    return Var(name)


def param(name: str) -> Param:
    return Param(name)


def symbols(names: str, kind=Var) -> tuple:
    return tuple(kind(n) for n in names.replace(",", " ").split())


# differentiation -----------------------------------------------------------


def diff(e: Expr, name: str, _memo=None) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``name``."""
    memo = {} if _memo is None else _memo
    key = id(e)
    if key in memo:
        return memo[key][1]
    if name not in e.free:
        out = ZERO
    elif isinstance(e, Var):
        out = ONE if e.name == name else ZERO
    elif isinstance(e, Param):
        # parameters are constants for differentiation purposes
        out = ZERO
    elif isinstance(e, Add):
        out = add(*(diff(t, name, memo) for t in e.terms))
    elif isinstance(e, Mul):
        parts = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = diff(f, name, memo)
            if is_zero(df):
                continue
            parts.append(mul(*fs[:i], df, *fs[i + 1 :]))
        out = add(*parts)
    elif isinstance(e, Pow):
        b, x = e.base, e.exp
        db = diff(b, name, memo)
        if name not in x.free:
            out = mul(x, power(b, add(x, MINUS_ONE)), db)
        else:
            dx = diff(x, name, memo)
            out = mul(e, add(mul(dx, log(b)), mul(x, db, power(b, MINUS_ONE))))
    elif isinstance(e, Func):
        u = e.arg
        du = diff(u, name, memo)
        if e.name == "sqrt":
            out = mul(HALF, du, power(e, MINUS_ONE))
        elif e.name == "exp":
            out = mul(e, du)
        elif e.name == "log":
            out = mul(du, power(u, MINUS_ONE))
        elif e.name == "sin":
            out = mul(cos(u), du)
        elif e.name == "cos":
            out = neg(mul(sin(u), du))
        elif e.name == "acos":
            out = neg(mul(du, power(sqrt(sub(ONE, power(u, 2))), MINUS_ONE)))
        else:  # pragma: no cover - Func validates names
            raise ValueError(e.name)
    else:
        out = ZERO
    memo[key] = (e, out)
    return out


def grad(e: Expr, names: Sequence[str]) -> tuple[Expr, ...]:
    return tuple(diff(e, n) for n in names)


# substitution --------------------------------------------------------------


def substitute(e: Expr, mapping: Mapping[str, Expr], _memo=None) -> Expr:
    """Simultaneous substitution of symbols by expressions, rebuilt through the
    smart constructors so local simplification applies."""
    memo = {} if _memo is None else _memo
    key = id(e)
    if key in memo:
        return memo[key][1]
    if not (e.free & mapping.keys()):
        out = e
    elif isinstance(e, Symbol):
        out = as_expr(mapping[e.name])
    elif isinstance(e, Add):
        out = add(*(substitute(t, mapping, memo) for t in e.terms))
    elif isinstance(e, Mul):
        out = mul(*(substitute(f, mapping, memo) for f in e.factors))
    elif isinstance(e, Pow):
        out = power(substitute(e.base, mapping, memo), substitute(e.exp, mapping, memo))
    elif isinstance(e, Func):
        out = func(e.name, substitute(e.arg, mapping, memo))
    else:
        out = e
    memo[key] = (e, out)
    return out


def rebuild(e: Expr) -> Expr:
    """Normalize ``e`` by rebuilding it bottom-up through the smart constructors."""
    if isinstance(e, (Const, Symbol)):
        return e
    if isinstance(e, Add):
        return add(*(rebuild(t) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(rebuild(f) for f in e.factors))
    if isinstance(e, Pow):
        return power(rebuild(e.base), rebuild(e.exp))
    if isinstance(e, Func):
        return func(e.name, rebuild(e.arg))
    raise TypeError(type(e))


def to_params(e: Expr, names: Iterable[str]) -> Expr:
    """Reinterpret the given symbol names as parameters."""
    names = set(names)
    return substitute(e, {n: Param(n) for n in names if n in e.free})


def count_nodes(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def exact_value(v) -> Const:
    """A parameter value as an exact rational; floats go through their
    shortest decimal repr, so 0.2 becomes 1/5 rather than the binary value."""
    if isinstance(v, Expr):
        return v
    if isinstance(v, float):
        return Const(Fraction(repr(v)))
    return Const(Fraction(v))


def bind(e: Expr, params: Mapping[str, object]) -> Expr:
    """Substitute parameter values as exact constants (folding what becomes constant)."""
    return substitute(e, {k: exact_value(v) for k, v in params.items()})
