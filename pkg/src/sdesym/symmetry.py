"""Determining equations, symmetry verification and discovery by collocation."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expr import HALF, ZERO, Const, Expr, Var, add, as_expr, mul
from .linalg import Mat, Vec, directional, directional_mat, matmul
from .numeric import evaluate_many
from .sampling import zero_check, zero_check_all
from .sde import SdeModel, generator_apply
from .transform import (
    InfinitesimalTransformation,
    StochasticTransformation,
    matrix_bracket,
    pushforward,
)


class InconclusiveError(RuntimeError):
    """The collocation system is too ill-conditioned to decide."""


@dataclass(frozen=True)
class DeterminingResidual:
    r_sigma: Mat
    r_mu: Vec

    def entries(self) -> list[Expr]:
        return [x for row in self.r_sigma for x in row] + list(self.r_mu)

    def labels(self) -> list[str]:
        n = len(self.r_mu)
        m = len(self.r_sigma[0]) if self.r_sigma else 0
        return [f"sigma[{i}][{j}]" for i in range(n) for j in range(m)] + [f"mu[{i}]" for i in range(n)]


def determining_residual(sde: SdeModel, v: InfinitesimalTransformation) -> DeterminingResidual:
    """r_sigma = [Y, sigma] + tau/2 sigma + sigma C;  r_mu = Y(mu) - L(Y) + tau mu."""
    if v.n != sde.n or v.m != sde.m:
        raise ValueError(f"triad is ({v.n}, {v.m}), SDE is ({sde.n}, {sde.m})")
    if tuple(v.vars) != tuple(sde.vars):
        raise ValueError(f"triad variables {v.vars} differ from SDE state {sde.vars}")
    xs = sde.vars
    br = matrix_bracket(v.y, sde.sigma, xs)
    half_tau = mul(HALF, v.tau)
    sc = matmul(sde.sigma, v.c)
    r_sigma = tuple(
        tuple(add(br[i][j], mul(half_tau, sde.sigma[i][j]), sc[i][j]) for j in range(sde.m)) for i in range(sde.n)
    )
    r_mu = tuple(
        add(directional(v.y, xs, sde.mu[i]), mul(-1, generator_apply(sde, v.y[i])), mul(v.tau, sde.mu[i]))
        for i in range(sde.n)
    )
    return DeterminingResidual(r_sigma, r_mu)


@dataclass
class SymmetryVerdict:
    ok: bool
    entries: dict[str, dict] = field(default_factory=dict)
    witness: dict | None = None
    residual: float | None = None
    failed_entry: str | None = None

    @property
    def max_abs(self) -> float:
        return max((e["max_abs"] for e in self.entries.values()), default=0.0)

    def __bool__(self):
        return self.ok

    def as_dict(self) -> dict:
        return {
            "verdict": "yes" if self.ok else "no",
            "max_abs_residual": self.max_abs,
            "witness": None if self.ok else self.witness,
            "residual_value": self.residual,
            "failed_entry": self.failed_entry,
            "entries": self.entries,
        }


def is_symmetry(sde: SdeModel, v: InfinitesimalTransformation, trials: int = 100, tol: float = 1e-9, sampler=None) -> SymmetryVerdict:
    """Apply ``equiv_zero`` to every determining residual entry."""
    sampler = sampler or sde.sampler()
    res = determining_residual(sde, v)
    verdict = SymmetryVerdict(True)
    for label, e in zip(res.labels(), res.entries()):
        chk = zero_check(e, sampler, trials, tol)
        verdict.entries[label] = chk.as_dict()
        if not chk.ok and verdict.ok:
            verdict.ok = False
            verdict.witness = chk.witness
            verdict.residual = chk.value
            verdict.failed_entry = label
    return verdict


@dataclass(frozen=True)
class AnsatzSpace:
    """Linear ansatz for (Y, C, tau).

    ``y_masks[i]`` lists basis indices used by the component Y^i; ``c_masks``
    maps an upper-triangular position (i, j), i < j, of the skew matrix C to
    its basis indices (C[j][i] is the negative); ``tau_mask`` lists basis
    indices for tau.
    """

    basis: tuple[Expr, ...]
    y_masks: tuple[tuple[int, ...], ...]
    c_masks: dict = field(default_factory=dict)
    tau_mask: tuple[int, ...] = ()

    @classmethod
    def full(cls, basis, n: int, m: int = 1, with_c: bool = False, with_tau: bool = False):
        idx = tuple(range(len(basis)))
        c_masks = {(i, j): idx for i in range(m) for j in range(i + 1, m)} if with_c else {}
        return cls(tuple(as_expr(b) for b in basis), tuple(idx for _ in range(n)), c_masks, idx if with_tau else ())

    @property
    def unknowns(self) -> list[tuple[str, object, int]]:
        out = []
        for i, mask in enumerate(self.y_masks):
            out += [("y", i, k) for k in mask]
        for pos in sorted(self.c_masks):
            out += [("c", pos, k) for k in self.c_masks[pos]]
        out += [("tau", None, k) for k in self.tau_mask]
        return out

    @property
    def d(self) -> int:
        return len(self.unknowns)

    def triad(self, vars, m: int, coeffs) -> InfinitesimalTransformation:
        n = len(self.y_masks)
        y = [[] for _ in range(n)]
        c = [[[] for _ in range(m)] for _ in range(m)]
        tau = []
        for (kind, where, k), a in zip(self.unknowns, coeffs):
            a = as_expr(a)
            if a == ZERO:
                continue
            term = mul(a, self.basis[k])
            if kind == "y":
                y[where].append(term)
            elif kind == "c":
                i, j = where
                c[i][j].append(term)
                c[j][i].append(mul(-1, term))
            else:
                tau.append(term)
        return InfinitesimalTransformation(
            tuple(vars),
            tuple(add(*t) for t in y),
            tuple(tuple(add(*c[i][j]) for j in range(m)) for i in range(m)),
            add(*tau),
        )


@dataclass
class FindResult:
    symmetries: list[InfinitesimalTransformation]
    singular_values: list[float]
    threshold: float
    n_points: int
    coefficients: list[list[float]]

    @property
    def dimension(self) -> int:
        return len(self.symmetries)


def _rationalize(x: float, tol: float = 1e-9, max_den: int = 1000) -> Fraction:
    q = Fraction(x).limit_denominator(max_den)
    if abs(float(q) - x) <= tol * max(1.0, abs(x)):
        return q
    return Fraction(x)


def _rref(rows: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    a = rows.astype(float).copy()
    k, d = a.shape
    r = 0
    for col in range(d):
        if r == k:
            break
        piv = r + int(np.argmax(np.abs(a[r:, col])))
        if abs(a[piv, col]) < tol:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r] /= a[r, col]
        for i in range(k):
            if i != r:
                a[i] -= a[i, col] * a[r]
        r += 1
    return a[:r]


def _column_rank_gap(a: np.ndarray, tol: float) -> tuple[int, np.ndarray]:
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0, s
    return int(np.sum(s > tol * s[0])), s


def find_symmetries(
    sde: SdeModel,
    space: AnsatzSpace,
    svd_tol: float = 1e-8,
    *,
    n_points: int | None = None,
    seed: int = 0,
    trials: int = 100,
    verify_tol: float = 1e-9,
) -> FindResult:
    """Numeric nullspace of the collocated determining system, symbolically
    re-verified.  Completeness is relative to the ansatz basis."""
    d = space.d
    if d < 1:
        raise ValueError("ansatz has no unknowns")
    n_points = n_points or 10 * d
    if n_points < 3 * d:
        raise ValueError(f"sample budget {n_points} below 3 x {d} unknowns")
    sampler = sde.sampler(seed)
    pts = sampler.sample(n_points, stream=1)

    # the ansatz itself must be free of linear dependencies, otherwise the
    # nullspace contains spurious combinations that vanish identically
    for group in _unknown_groups(space):
        vals = np.column_stack(evaluate_many([space.basis[k] for k in group], pts, shape=(n_points,)))
        rank, s = _column_rank_gap(vals, 1e-10)
        if rank < len(group):
            raise InconclusiveError(f"ansatz basis is rank-deficient (singular values {s.tolist()})")

    columns = []
    unit = [0] * d
    for idx in range(d):
        coeffs = list(unit)
        coeffs[idx] = 1
        v = space.triad(sde.vars, sde.m, coeffs)
        res = determining_residual(sde, v).entries()
        vals = evaluate_many(res, pts, shape=(n_points,))
        columns.append(np.concatenate([np.asarray(x, dtype=float) for x in vals]))
    a = np.column_stack(columns)
    norms = np.linalg.norm(a, axis=0)
    # a column that vanishes up to roundoff is an exact null direction, and
    # normalizing it would blow its noise up to unit size
    tiny = norms <= 1e-12 * max(norms.max(), 1.0)
    scale = np.where(tiny, 1.0, norms)
    a_scaled = np.where(tiny, 0.0, a) / scale
    _, s, vt = np.linalg.svd(a_scaled, full_matrices=True)
    s_full = np.zeros(d)
    s_full[: s.size] = s
    smax = s_full[0] if s_full[0] > 0 else 1.0
    thresh = svd_tol * smax
    null_mask = s_full <= thresh
    kept = s_full[~null_mask]
    dropped = s_full[null_mask]
    if kept.size and kept.min() < 10 * thresh:
        raise InconclusiveError(
            f"no clear spectral gap: smallest kept singular value {kept.min():.3e} vs threshold {thresh:.3e}"
        )
    if kept.size and dropped.size and kept.min() < 10 * max(dropped.max(), 1e-300) and dropped.max() > 0:
        if kept.min() / dropped.max() < 10:
            raise InconclusiveError("gap between kept and discarded singular values below 10x")
    null = vt[null_mask]
    coeffs = []
    syms = []
    if null.size:
        # back to unscaled coordinates, then a seed-independent canonical basis
        basis = null / scale
        basis = _rref(basis)
        for row in basis:
            row = np.where(np.abs(row) < 1e-10 * np.abs(row).max(), 0.0, row)
            qs = [_rationalize(float(x)) for x in row]
            v = space.triad(sde.vars, sde.m, [Const(q) for q in qs])
            verdict = is_symmetry(sde, v, trials=trials, tol=verify_tol, sampler=sde.sampler(seed + 1))
            if not verdict.ok:
                raise InconclusiveError(f"nullspace candidate failed symbolic re-verification at {verdict.witness}")
            syms.append(v)
            coeffs.append([float(q) for q in qs])
    return FindResult(syms, s_full.tolist(), float(thresh), n_points, coeffs)


def _unknown_groups(space: AnsatzSpace):
    groups = [tuple(m) for m in space.y_masks if m]
    groups += [tuple(space.c_masks[p]) for p in sorted(space.c_masks) if space.c_masks[p]]
    if space.tau_mask:
        groups.append(tuple(space.tau_mask))
    return groups


@dataclass
class StrongificationReport:
    ok: bool
    equations: list[dict]
    strong_after: list[bool]

    def as_dict(self):
        return {"ok": self.ok, "equations": self.equations, "strong_after": self.strong_after}


def verify_strongification(
    vs: Sequence[InfinitesimalTransformation], b: Mat, eta: Expr, sampler, trials: int = 100, tol: float = 1e-9
) -> StrongificationReport:
    """Check Y_i(B) = -B C_i and Y_i(eta) = -tau_i eta, then confirm that the
    pushforward by (id, B, eta) of every generator is strong."""
    eta = as_expr(eta)
    eqs = []
    strong = []
    ok = True
    for idx, v in enumerate(vs):
        xs = v.vars
        yb = directional_mat(v.y, xs, b)
        bc = matmul(b, v.c)
        m = len(b)
        r_b = [add(yb[i][j], bc[i][j]) for i in range(m) for j in range(m)]
        r_eta = add(directional(v.y, xs, eta), mul(v.tau, eta))
        chk_b = zero_check_all(r_b, sampler, trials, tol)
        chk_eta = zero_check(r_eta, sampler, trials, tol)
        eqs.append({"generator": v.name or idx, "Y(B) = -B C": chk_b.as_dict(), "Y(eta) = -tau eta": chk_eta.as_dict()})
        ok = ok and chk_b.ok and chk_eta.ok
        t = StochasticTransformation(tuple(xs), tuple(xs), tuple(Var(x) for x in xs), b, eta, {x: Var(x) for x in xs})
        pv = pushforward(t, v)
        rest = [x for row in pv.c for x in row] + [pv.tau]
        is_strong = zero_check_all(rest, sampler, trials, tol).ok
        strong.append(is_strong)
        ok = ok and (is_strong or not (chk_b.ok and chk_eta.ok))
    return StrongificationReport(ok and all(strong), eqs, strong)

