"""Finite stochastic transformations (Phi, B, eta) and infinitesimal ones
(Y, C, tau): composition, inversion, action on SDEs, Lie brackets, pushforward
and numeric flows.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import MINUS_ONE, ONE, ZERO, Const, Expr, Var, add, as_expr, cos, is_const, mul, power, sin, sqrt, sub
from .linalg import (
    Mat,
    Vec,
    commutator,
    directional,
    directional_mat,
    eye,
    jacobian,
    madd,
    matmul,
    matvec,
    mscale,
    msub,
    subs_mat,
    subs_vec,
    transpose,
    vec,
    zeros,
)
from .numeric import DomainError, evaluate_many
from .sampling import ZeroCheck, zero_check, zero_check_all
from .sde import SdeModel, generator_apply, pushforward_domain


class VariableMismatch(ValueError):
    pass


class MissingInverse(ValueError):
    pass


@dataclass(frozen=True)
class StochasticTransformation:
    src_vars: tuple[str, ...]
    dst_vars: tuple[str, ...]
    phi: Vec
    b: Mat
    eta: Expr = ONE
    phi_inv: Mapping[str, Expr] | None = None
    guards: tuple[Expr, ...] = ()

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def is_strong(self) -> bool:
        return self.is_quasi_strong and self.b == eye(self.m)

    @property
    def is_quasi_strong(self) -> bool:
        return is_const(self.eta, 1)


def identity(vars: Sequence[str], m: int) -> StochasticTransformation:
    vars = tuple(vars)
    return StochasticTransformation(vars, vars, tuple(Var(v) for v in vars), eye(m), ONE, {v: Var(v) for v in vars})


def rotation_from_angle(theta) -> Mat:
    """SO(2) element [[cos t, sin t], [-sin t, cos t]]."""
    t = as_expr(theta)
    return ((cos(t), sin(t)), (mul(-1, sin(t)), cos(t)))


def rotation_from_cosine(b, branch: int = 1) -> Mat:
    """SO(2) element [[b, s*sqrt(1-b^2)], [-s*sqrt(1-b^2), b]] with s = branch."""
    b = as_expr(b)
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    r = mul(branch, sqrt(sub(ONE, power(b, 2))))
    return ((b, r), (mul(-1, r), b))


def compose(t2: StochasticTransformation, t1: StochasticTransformation) -> StochasticTransformation:
    """t2 o t1 = (Phi2 o Phi1, (B2 o Phi1) B1, (eta2 o Phi1) eta1)."""
    if tuple(t1.dst_vars) != tuple(t2.src_vars):
        raise VariableMismatch(f"cannot compose: {t1.dst_vars} != {t2.src_vars}")
    if t1.m != t2.m:
        raise VariableMismatch("noise dimensions differ")
    along = dict(zip(t1.dst_vars, t1.phi))
    phi = subs_vec(t2.phi, along)
    b = matmul(subs_mat(t2.b, along), t1.b)
    eta = mul(subs_vec((t2.eta,), along)[0], t1.eta)
    phi_inv = None
    if t1.phi_inv is not None and t2.phi_inv is not None:
        back = dict(t2.phi_inv)
        phi_inv = {v: subs_vec((t1.phi_inv[v],), back)[0] for v in t1.src_vars}
    guards = tuple(t1.guards) + subs_vec(tuple(t2.guards), along)
    return StochasticTransformation(t1.src_vars, t2.dst_vars, phi, b, eta, phi_inv, guards)


def inverse(t: StochasticTransformation) -> StochasticTransformation:
    """(Phi^-1, B^T o Phi^-1, (1/eta) o Phi^-1)."""
    if t.phi_inv is None:
        raise MissingInverse("inverse requires phi_inv")
    back = dict(t.phi_inv)
    phi = tuple(as_expr(back[v]) for v in t.src_vars)
    b = subs_mat(transpose(t.b), back)
    eta = subs_vec((power(t.eta, MINUS_ONE),), back)[0]
    phi_inv = dict(zip(t.dst_vars, t.phi))
    return StochasticTransformation(t.dst_vars, t.src_vars, phi, b, eta, phi_inv)


def apply_to_sde(t: StochasticTransformation, sde: SdeModel, *, preimage: bool = False, boxes=None) -> SdeModel:
    """E_T(mu, sigma) = ((L(Phi)/eta) o Phi^-1, (grad Phi . sigma . B^T / sqrt(eta)) o Phi^-1).

    Without ``phi_inv`` (or with ``preimage=True``) the coefficients are left
    in the original variables and the model is flagged ``preimage``.
    """
    if len(t.phi) != sde.n or tuple(t.src_vars) != tuple(sde.vars):
        raise VariableMismatch(f"transformation acts on {t.src_vars}, SDE state is {sde.vars}")
    if t.m != sde.m:
        raise VariableMismatch(f"B is {t.m}x{t.m}, SDE has {sde.m} noise channels")
    quasi = is_const(t.eta, 1)
    inv_eta = power(t.eta, MINUS_ONE)
    drift = tuple(generator_apply(sde, p) if quasi else mul(generator_apply(sde, p), inv_eta) for p in t.phi)
    load = matmul(matmul(jacobian(t.phi, sde.vars), sde.sigma), transpose(t.b))
    if not quasi:
        load = mscale(power(t.eta, Const(Fraction(-1, 2))), load)
    if preimage or t.phi_inv is None:
        return SdeModel(
            tuple(t.dst_vars), drift, load, dict(sde.params), sde.domain, sde.name + "'", preimage=True
        )
    back = {k: as_expr(v) for k, v in t.phi_inv.items()}
    domain = pushforward_domain(sde, t.dst_vars, t.phi, back, subs_vec(tuple(t.guards), back), boxes)
    return SdeModel(tuple(t.dst_vars), subs_vec(drift, back), subs_mat(load, back), dict(sde.params), domain, sde.name + "'")


@dataclass(frozen=True)
class InfinitesimalTransformation:
    vars: tuple[str, ...]
    y: Vec
    c: Mat
    tau: Expr = ZERO
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def m(self) -> int:
        return len(self.c)

    @classmethod
    def strong(cls, vars, y, m: int, name: str = ""):
        return cls(tuple(vars), vec(y), zeros(m, m), ZERO, name)

    def scaled(self, k) -> "InfinitesimalTransformation":
        k = as_expr(k)
        return InfinitesimalTransformation(
            self.vars, tuple(mul(k, x) for x in self.y), mscale(k, self.c), mul(k, self.tau), self.name
        )

    def __add__(self, other: "InfinitesimalTransformation"):
        return InfinitesimalTransformation(
            self.vars,
            tuple(add(a, b) for a, b in zip(self.y, other.y)),
            madd(self.c, other.c),
            add(self.tau, other.tau),
        )

    def entries(self) -> list[Expr]:
        return list(self.y) + [x for row in self.c for x in row] + [self.tau]


def vector_bracket(y1: Vec, y2: Vec, vars: Sequence[str]) -> Vec:
    """[Y1, Y2]^i = Y1(Y2^i) - Y2(Y1^i)."""
    return tuple(sub(directional(y1, vars, b), directional(y2, vars, a)) for a, b in zip(y1, y2))


def matrix_bracket(h: Vec, k: Mat, vars: Sequence[str]) -> Mat:
    """E^i_j = sum_k (H^k d_k K^i_j - K^k_j d_k H^i)."""
    n = len(vars)
    if len(h) != n or len(k) != n:
        raise ValueError(f"matrix_bracket: field has {len(h)} components, matrix {len(k)} rows, state {n}")
    dh = jacobian(h, vars)
    cols = len(k[0]) if k else 0
    return tuple(
        tuple(
            sub(directional(h, vars, k[i][j]), add(*(mul(k[p][j], dh[i][p]) for p in range(n))))
            for j in range(cols)
        )
        for i in range(n)
    )


def lie_bracket(v1: InfinitesimalTransformation, v2: InfinitesimalTransformation) -> InfinitesimalTransformation:
    if v1.vars != v2.vars or v1.m != v2.m:
        raise VariableMismatch("brackets need triads on the same (n, m)")
    xs = v1.vars
    y = vector_bracket(v1.y, v2.y, xs)
    c = msub(msub(directional_mat(v1.y, xs, v2.c), directional_mat(v2.y, xs, v1.c)), commutator(v1.c, v2.c))
    tau = sub(directional(v1.y, xs, v2.tau), directional(v2.y, xs, v1.tau))
    return InfinitesimalTransformation(xs, y, c, tau)


def pushforward(t: StochasticTransformation, v: InfinitesimalTransformation, *, preimage: bool = False, sampler=None):
    """T_*(V) = ((grad Phi . Y) o Phi^-1, (B C B^-1 + Y(B) B^-1) o Phi^-1, (tau + Y(eta)/eta) o Phi^-1).

    With a ``sampler`` on the source domain, the skew symmetry of the new C
    is re-verified (raises ``ValueError`` otherwise)."""
    if tuple(v.vars) != tuple(t.src_vars):
        raise VariableMismatch(f"triad lives on {v.vars}, transformation on {t.src_vars}")
    xs = v.vars
    bt = transpose(t.b)
    y = matvec(jacobian(t.phi, xs), v.y)
    c = madd(matmul(matmul(t.b, v.c), bt), matmul(directional_mat(v.y, xs, t.b), bt))
    tau = add(v.tau, mul(directional(v.y, xs, t.eta), power(t.eta, MINUS_ONE)))
    if sampler is not None:
        chk = skew_check(c, sampler)
        if not chk.ok:
            raise ValueError(f"pushforward C is not skew: {chk.as_dict()}")
    if preimage:
        return InfinitesimalTransformation(tuple(t.dst_vars), y, c, tau, v.name)
    if t.phi_inv is None:
        raise MissingInverse("pushforward requires phi_inv (or preimage=True)")
    back = {k: as_expr(e) for k, e in t.phi_inv.items()}
    return InfinitesimalTransformation(
        tuple(t.dst_vars), subs_vec(y, back), subs_mat(c, back), subs_vec((tau,), back)[0], v.name
    )


def skew_check(c: Mat, sampler, trials: int = 100, tol: float = 1e-9) -> ZeroCheck:
    m = len(c)
    return zero_check_all([add(c[i][j], c[j][i]) for i in range(m) for j in range(i, m)], sampler, trials, tol)


def validate_transformation(t: StochasticTransformation, sampler, trials: int = 100, tol: float = 1e-9) -> dict:
    """Check SO(m) membership of B, positivity of eta and the inverse chart."""
    m = t.m
    btb = matmul(transpose(t.b), t.b)
    ident = eye(m)
    report = {
        "orthogonal": zero_check_all([sub(btb[i][j], ident[i][j]) for i in range(m) for j in range(m)], sampler, trials, tol).ok,
        "det_one": zero_check(sub(det(t.b), ONE), sampler, trials, tol).ok,
    }
    pts = sampler.sample(trials)
    eta = evaluate_many([t.eta], pts, shape=(trials,))[0]
    report["eta_positive"] = bool(np.all(eta > 0))
    if t.phi_inv is not None:
        along = dict(zip(t.dst_vars, t.phi))
        round_trip = [sub(subs_vec((as_expr(t.phi_inv[v]),), along)[0], Var(v)) for v in t.src_vars]
        report["inverse_chart"] = zero_check_all(round_trip, sampler, trials, tol).ok
    report["ok"] = all(report.values())
    return report


def det(a: Mat) -> Expr:
    n = len(a)
    if n == 1:
        return a[0][0]
    if n == 2:
        return sub(mul(a[0][0], a[1][1]), mul(a[0][1], a[1][0]))
    terms = []
    for j in range(n):
        minor = tuple(tuple(row[k] for k in range(n) if k != j) for row in a[1:])
        terms.append(mul(-1 if j % 2 else 1, a[0][j], det(minor)))
    return add(*terms)


class FlowExit(RuntimeError):
    def __init__(self, parameter: float, point: dict):
        super().__init__(f"flow left the domain at parameter {parameter:.6g}")
        self.parameter = parameter
        self.point = point


def flow(
    v: InfinitesimalTransformation,
    a: float,
    x0: Mapping[str, float],
    *,
    params: Mapping[str, float] | None = None,
    guards: Sequence[Expr] = (),
    steps: int = 1024,
    horizon: float = 1e3,
) -> dict[str, float]:
    """Classical RK4 integration of dx/da = Y(x) from x0 up to parameter a.

    Raises :class:`FlowExit` with the last in-domain parameter when a guard
    fails or a coefficient becomes singular."""
    if abs(a) > horizon:
        raise ValueError(f"|a| = {abs(a)} exceeds the flow horizon {horizon}")
    xs = v.vars
    params = dict(params or {})
    x = np.array([float(x0[k]) for k in xs])
    if a == 0:
        return dict(zip(xs, x.tolist()))
    h = a / steps

    def field_at(p):
        pt = {**params, **dict(zip(xs, p))}
        for g in guards:
            if evaluate_many([g], pt)[0] <= 0:
                raise DomainError("guard violated")
        return np.array([float(val) for val in evaluate_many(list(v.y), pt)])

    s = 0.0
    for _ in range(steps):
        try:
            k1 = field_at(x)
            k2 = field_at(x + 0.5 * h * k1)
            k3 = field_at(x + 0.5 * h * k2)
            k4 = field_at(x + h * k3)
            nxt = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            field_at(nxt)
        except DomainError:
            raise FlowExit(s, dict(zip(xs, x.tolist()))) from None
        x = nxt
        s += h
    return dict(zip(xs, x.tolist()))
