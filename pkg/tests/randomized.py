"""Seeded generators of random transformations and triads for the
algebraic-law checks (group axioms, Jacobi, morphism, functoriality)."""

from fractions import Fraction

import numpy as np

from sdesym.expr import Const, Var, add, exp, mul, power, sub
from sdesym.sde import Domain, SdeModel
from sdesym.transform import InfinitesimalTransformation, StochasticTransformation, rotation_from_angle

SRC = ("x", "z")
BOX = {"x": (0.4, 1.6), "z": (0.4, 1.6)}


def _q(rng, lo=-2, hi=2, den=4) -> Const:
    return Const(Fraction(int(rng.integers(lo * den, hi * den + 1)), den))


def poly(rng, names, degree=2, scale=1) -> object:
    """Random polynomial of total degree <= degree with small rational coefficients."""
    a, b = (Var(n) for n in names)
    terms = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            terms.append(mul(_q(rng), power(a, i), power(b, j)))
    return mul(Const(Fraction(scale)), add(*terms))


def transformation(rng, src, dst, time_change=True) -> StochasticTransformation:
    """Triangular chart Phi = (a x + q(z), b z + c) with exact inverse, a
    rotation by a polynomial angle and eta = exp(small polynomial)."""
    x, z = (Var(n) for n in src)
    xp, zp = (Var(n) for n in dst)
    a = Const(Fraction(int(rng.integers(2, 5)), 2)) * (1 if rng.random() < 0.5 else -1)
    b = Const(Fraction(int(rng.integers(2, 5)), 2))
    c = _q(rng)
    q = add(mul(_q(rng), z), mul(_q(rng), z, z))
    phi = (add(mul(a, x), q), add(mul(b, z), c))
    z_back = mul(sub(zp, c), power(b, -1))
    x_back = mul(sub(xp, _subst_z(q, src[1], z_back)), power(a, -1))
    inv = {src[0]: x_back, src[1]: z_back}
    theta = poly(rng, src, 2, Fraction(1, 2))
    eta = exp(mul(Const(Fraction(1, 5)), poly(rng, src, 1))) if time_change else Const(1)
    return StochasticTransformation(tuple(src), tuple(dst), phi, rotation_from_angle(theta), eta, inv)


def _subst_z(e, name, value):
    from sdesym.expr import substitute

    return substitute(e, {name: value})


def triad(rng, names, m=2) -> InfinitesimalTransformation:
    y = (poly(rng, names), poly(rng, names))
    c = poly(rng, names)
    cm = ((Const(0), c), (mul(-1, c), Const(0)))
    return InfinitesimalTransformation(tuple(names), y, cm, poly(rng, names))


def toy_sde(names=SRC) -> SdeModel:
    x, z = (Var(n) for n in names)
    mu = (mul(x, z), add(1, mul(x, x)))
    sigma = ((add(1, mul(z, z)), x), (Const(0), add(2, x)))
    return SdeModel(tuple(names), mu, sigma, {}, Domain(dict(BOX)), "toy")


def draws(n=20, seed=2024):
    root = np.random.default_rng(seed)
    return [np.random.default_rng(int(s)) for s in root.integers(0, 2**31, size=n)]
