"""Small dense linear algebra over expression entries.

Vectors are tuples of :class:`Expr`; matrices are tuples of row tuples.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .expr import ONE, ZERO, Expr, add, as_expr, diff, mul, substitute

Vec = tuple[Expr, ...]
Mat = tuple[tuple[Expr, ...], ...]


def vec(items) -> Vec:
    return tuple(as_expr(x) for x in items)


def mat(rows) -> Mat:
    return tuple(tuple(as_expr(x) for x in row) for row in rows)


def shape(a: Mat) -> tuple[int, int]:
    return len(a), (len(a[0]) if a else 0)


def eye(n: int) -> Mat:
    return tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n))


def zeros(n: int, m: int) -> Mat:
    return tuple(tuple(ZERO for _ in range(m)) for _ in range(n))


def transpose(a: Mat) -> Mat:
    if not a:
        return ()
    return tuple(tuple(a[i][j] for i in range(len(a))) for j in range(len(a[0])))


def matmul(a: Mat, b: Mat) -> Mat:
    n, k = shape(a)
    k2, m = shape(b)
    if k != k2:
        raise ValueError(f"shape mismatch {n}x{k} @ {k2}x{m}")
    return tuple(tuple(add(*(mul(a[i][p], b[p][j]) for p in range(k))) for j in range(m)) for i in range(n))


def matvec(a: Mat, v: Vec) -> Vec:
    if a and len(a[0]) != len(v):
        raise ValueError("shape mismatch in matvec")
    return tuple(add(*(mul(row[j], v[j]) for j in range(len(v)))) for row in a)


def madd(a: Mat, b: Mat) -> Mat:
    return tuple(tuple(add(x, y) for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def msub(a: Mat, b: Mat) -> Mat:
    return tuple(tuple(add(x, mul(-1, y)) for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mscale(c, a: Mat) -> Mat:
    c = as_expr(c)
    return tuple(tuple(mul(c, x) for x in row) for row in a)


def vadd(a: Vec, b: Vec) -> Vec:
    return tuple(add(x, y) for x, y in zip(a, b))


def vscale(c, a: Vec) -> Vec:
    c = as_expr(c)
    return tuple(mul(c, x) for x in a)


def jacobian(fs: Sequence[Expr], names: Sequence[str]) -> Mat:
    return tuple(tuple(diff(f, n) for n in names) for f in fs)


def directional(field: Vec, names: Sequence[str], f: Expr) -> Expr:
    """Y(f) = sum_k Y^k d_k f."""
    return add(*(mul(field[k], diff(f, n)) for k, n in enumerate(names)))


def directional_mat(field: Vec, names: Sequence[str], a: Mat) -> Mat:
    return tuple(tuple(directional(field, names, x) for x in row) for row in a)


def subs_vec(v: Vec, mapping: Mapping[str, Expr]) -> Vec:
    memo: dict = {}
    return tuple(substitute(x, mapping, memo) for x in v)


def subs_mat(a: Mat, mapping: Mapping[str, Expr]) -> Mat:
    memo: dict = {}
    return tuple(tuple(substitute(x, mapping, memo) for x in row) for row in a)


def flat(a: Mat) -> list[Expr]:
    return [x for row in a for x in row]


def commutator(a: Mat, b: Mat) -> Mat:
    return msub(matmul(a, b), matmul(b, a))
