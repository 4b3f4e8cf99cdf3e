"""Recursive-descent parser for the expression grammar.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ ("^" | "**") unary ] ;        (* right associative *)
    atom    = number | name | name "(" expr ")" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
    name    = letter { letter | digit | "_" } ;

Decimal literals are read exactly (``0.01`` is the rational 1/100).  Names
listed in ``params`` become :class:`Param` nodes, all others :class:`Var`.
Function names are ``sqrt exp log sin cos acos``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable

from .expr import FUNCTIONS, Const, Expr, Param, Var, add, div, func, mul, neg, power


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at offset {position}")
        self.position = position
        self.text = text


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^(),<>]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, params: frozenset[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.params = params

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            self.error(f"expected {value!r}")
        return self.take()

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = add(left, right) if op == "+" else add(left, neg(right))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.unary()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("^", "**"):
            self.take()
            return power(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        kind, value, pos = tok
        if kind == "num":
            self.take()
            return Const(Fraction(value))
        if kind == "name":
            self.take()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if value not in FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", pos, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(value, arg)
            return Param(value) if value in self.params else Var(value)
        if kind == "op" and value == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected {value!r}")


def parse(text: str, params: Iterable[str] = ()) -> Expr:
    """Parse ``text`` into an expression tree."""
    p = _Parser(text, frozenset(params))
    e = p.expr()
    if p.peek()[0] != "end":
        p.error(f"unexpected {p.peek()[1]!r}")
    return e


def parse_guard(text: str, params: Iterable[str] = ()) -> Expr:
    """Parse an inequality ``lhs > rhs`` or ``lhs < rhs`` into ``g`` with the
    meaning ``g > 0``."""
    for op in (">", "<"):
        if op in text:
            lhs, rhs = text.split(op, 1)
            if ">" in rhs or "<" in rhs:
                raise ParseError("chained inequality", text.index(op), text)
            a, b = parse(lhs, params), parse(rhs, params)
            return add(a, neg(b)) if op == ">" else add(b, neg(a))
    return parse(text, params)
