"""SDE data model, infinitesimal generator and Itô pushforward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .expr import HALF, Expr, add, as_expr, diff, is_zero, mul, substitute
from .linalg import Mat, Vec, jacobian, mat, matmul, subs_mat, subs_vec, vec
from .parse import parse, parse_guard
from .sampling import DomainSampler, ImageSampler


@dataclass(frozen=True)
class Domain:
    """Sampling boxes plus guard expressions (``g > 0`` on the domain).

    ``image_of`` lets a transformed model sample its domain by pushing the
    source domain's samples through a chart: ``(source Domain, {name: expr})``.
    """

    boxes: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    guards: tuple[Expr, ...] = ()
    image_of: tuple | None = None

    def sampler(self, fixed: Mapping[str, float], seed: int = 0):
        if self.image_of is not None and not self.boxes:
            src, mapping, src_fixed = self.image_of
            base = src.sampler({**src_fixed, **fixed}, seed)
            return ImageSampler(base, mapping, self.guards)
        return DomainSampler(dict(self.boxes), tuple(self.guards), dict(fixed), seed)


@dataclass(frozen=True)
class SdeModel:
    vars: tuple[str, ...]
    mu: Vec
    sigma: Mat
    params: Mapping[str, float] = field(default_factory=dict)
    domain: Domain = Domain()
    name: str = ""
    preimage: bool = False

    def __post_init__(self):
        n = len(self.vars)
        if len(self.mu) != n:
            raise ValueError(f"drift has {len(self.mu)} components, expected {n}")
        if len(self.sigma) != n:
            raise ValueError(f"diffusion has {len(self.sigma)} rows, expected {n}")
        if n and len({len(r) for r in self.sigma}) != 1:
            raise ValueError("diffusion rows have unequal lengths")
        allowed = set(self.vars) | set(self.params)
        for e in list(self.mu) + [x for row in self.sigma for x in row]:
            extra = e.free - allowed
            if extra and not self.preimage:
                raise ValueError(f"undeclared names {sorted(extra)} in coefficient {e}")

    @property
    def n(self) -> int:
        return len(self.vars)

    @property
    def m(self) -> int:
        return len(self.sigma[0]) if self.sigma else 0

    def sampler(self, seed: int = 0):
        return self.domain.sampler(self.params, seed)

    def coefficients(self) -> list[Expr]:
        return list(self.mu) + [x for row in self.sigma for x in row]

    @classmethod
    def from_strings(cls, vars, mu, sigma, params=None, boxes=None, guards=(), name=""):
        params = dict(params or {})
        p = list(params)
        return cls(
            tuple(vars),
            tuple(parse(s, p) if isinstance(s, str) else as_expr(s) for s in mu),
            tuple(tuple(parse(s, p) if isinstance(s, str) else as_expr(s) for s in row) for row in sigma),
            params,
            Domain(dict(boxes or {}), tuple(parse_guard(g, p) if isinstance(g, str) else g for g in guards)),
            name,
        )


def bind_params(sde: SdeModel) -> SdeModel:
    """The same model with every parameter replaced by its exact value."""
    from .expr import bind

    p = dict(sde.params)
    mu = tuple(bind(e, p) for e in sde.mu)
    sigma = tuple(tuple(bind(e, p) for e in row) for row in sde.sigma)
    guards = tuple(bind(g, p) for g in sde.domain.guards)
    dom = Domain(dict(sde.domain.boxes), guards, sde.domain.image_of)
    return SdeModel(sde.vars, mu, sigma, {}, dom, sde.name, sde.preimage)


@dataclass(frozen=True)
class ReducedPair:
    original: SdeModel
    reduced: SdeModel
    psi: Vec


def generator_apply(sde: SdeModel, f: Expr) -> Expr:
    """L(f) = 1/2 sum_a sum_ij s^i_a s^j_a d_ij f + sum_i mu^i d_i f."""
    f = as_expr(f)
    xs = sde.vars
    first = [diff(f, x) for x in xs]
    terms = [mul(sde.mu[i], first[i]) for i in range(sde.n)]
    for i in range(sde.n):
        if first[i].free.isdisjoint(xs):
            continue
        for j in range(sde.n):
            dij = diff(first[i], xs[j])
            if is_zero(dij):
                continue
            a = add(*(mul(sde.sigma[i][al], sde.sigma[j][al]) for al in range(sde.m)))
            terms.append(mul(HALF, a, dij))
    return add(*terms)


def carre_du_champ(sde: SdeModel, f: Expr, g: Expr) -> Expr:
    """sum_a (grad f . sigma)_a (grad g . sigma)_a."""
    lf = matmul((tuple(diff(f, x) for x in sde.vars),), sde.sigma)[0]
    lg = matmul((tuple(diff(g, x) for x in sde.vars),), sde.sigma)[0]
    return add(*(mul(a, b) for a, b in zip(lf, lg)))


def ito_pushforward(sde: SdeModel, phi: Sequence[Expr]) -> tuple[Vec, Mat]:
    """Itô's rule for F = phi(X): returns (L(phi_i), grad(phi) . sigma), both in
    the original variables."""
    phi = vec(phi)
    drift = tuple(generator_apply(sde, p) for p in phi)
    load = matmul(jacobian(phi, sde.vars), sde.sigma)
    return drift, load


def substitute_chart(e: Expr, chart_inverse: Mapping[str, Expr], allowed: set | None = None) -> Expr:
    """Simultaneous substitution realizing ``e o chart_inverse``.

    With ``allowed`` given, any free name of the result outside it is an
    error (an original variable survived the substitution)."""
    out = substitute(as_expr(e), {k: as_expr(v) for k, v in chart_inverse.items()})
    if allowed is not None:
        left = out.free - set(allowed)
        if left:
            raise ValueError(f"unbound names {sorted(left)} after substitution")
    return out


def pushforward_domain(sde: SdeModel, dst_vars, phi: Vec, phi_inv: Mapping[str, Expr] | None, extra_guards=(), boxes=None):
    guards = list(extra_guards)
    if phi_inv is not None:
        for g in sde.domain.guards:
            guards.append(substitute(g, phi_inv))
    mapping = dict(zip(dst_vars, phi))
    return Domain(dict(boxes or {}), tuple(guards), (sde.domain, mapping, dict(sde.params)))


__all__ = [
    "Domain",
    "SdeModel",
    "ReducedPair",
    "bind_params",
    "generator_apply",
    "carre_du_champ",
    "ito_pushforward",
    "substitute_chart",
    "pushforward_domain",
    "subs_vec",
    "subs_mat",
    "mat",
    "vec",
]
