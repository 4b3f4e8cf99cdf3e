"""Reduction maps, reduced SDEs, inherited symmetries, solvability, canonical
form and reconstruction-by-quadratures plans."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import ONE, Const, Expr, as_expr, diff, sub, substitute
from .linalg import Mat, Vec, directional, directional_mat, flat, jacobian, matmul, matvec, subs_mat, subs_vec
from .numeric import evaluate_many
from .parse import parse
from .printing import to_text
from .sampling import zero_check, zero_check_all
from .sde import Domain, ReducedPair, SdeModel, generator_apply
from .symmetry import is_symmetry
from .transform import InfinitesimalTransformation, lie_bracket

SPAN_TOL = 1e-8
SPAN_POINTS = 50


class ReductionError(ValueError):
    """A hypothesis of a reduction step failed; carries the condition
    name and a witness point."""

    def __init__(self, condition: str, witness=None, detail: str = ""):
        msg = f"{condition} failed" + (f": {detail}" if detail else "")
        if witness:
            msg += f" at {witness}"
        super().__init__(msg)
        self.condition = condition
        self.witness = witness


@dataclass(frozen=True)
class ReductionMapSpec:
    """Psi: M -> M' with named reduced coordinates.

    ``section`` maps every original variable to an expression in the reduced
    variables; it must satisfy Psi o section = id.
    """

    reduced_vars: tuple[str, ...]
    psi: Vec
    section: Mapping[str, Expr] | None = None

    def __post_init__(self):
        if len(self.reduced_vars) != len(self.psi):
            raise ValueError("one reduced variable name per Psi component")


def _points(sampler, n=SPAN_POINTS, stream=11):
    return sampler.sample(n, stream=stream)


def _eval_matrix(rows: Sequence[Sequence[Expr]], pts, n) -> np.ndarray:
    """Evaluate a matrix of expressions at n points -> array (n, rows, cols)."""
    r = len(rows)
    c = len(rows[0]) if r else 0
    vals = evaluate_many([x for row in rows for x in row], pts, shape=(n,))
    return np.stack([np.asarray(v, dtype=float) for v in vals], axis=-1).reshape(n, r, c)


def _rank(a: np.ndarray, tol: float = SPAN_TOL) -> int:
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > tol * max(s[0], 1e-300))) if s.size and s[0] > 0 else 0


@dataclass
class Report:
    ok: bool
    checks: dict = field(default_factory=dict)
    witness: dict | None = None
    failed: str | None = None

    def record(self, name: str, ok: bool, witness=None, **extra):
        self.checks[name] = {"ok": bool(ok), **extra}
        if not ok and self.ok:
            self.ok = False
            self.failed = name
            self.witness = witness

    def as_dict(self):
        return {"ok": self.ok, "failed": self.failed, "witness": self.witness, "checks": self.checks}


def verify_reduction_map(spec: ReductionMapSpec, vars: Sequence[str], ys: Sequence[Vec], sampler, trials: int = 100, tol: float = 1e-9) -> Report:
    """grad(Psi).Y_i == 0 and the rank conditions rank grad(Psi) = n - r,
    rank(Y_1|...|Y_r) = r at sampled points.  Connectedness of the level
    sets is an assumption, not a check."""
    vars = tuple(vars)
    n, r = len(vars), len(ys)
    rep = Report(True)
    if len(spec.psi) != n - r:
        rep.record("dimension", False, detail=f"Psi has {len(spec.psi)} components, expected n - r = {n - r}")
        return rep
    jac = jacobian(spec.psi, vars)
    for k, y in enumerate(ys):
        chk = zero_check_all(list(matvec(jac, tuple(y))), sampler, trials, tol)
        rep.record(f"grad(Psi).Y{k + 1} = 0", chk.ok, chk.witness, max_abs=chk.max_abs)
    pts = _points(sampler)
    m = SPAN_POINTS
    if n - r:
        jv = _eval_matrix(jac, pts, m)
        bad = [i for i in range(m) if _rank(jv[i]) != n - r]
        rep.record("rank grad(Psi) = n - r", not bad, _witness(pts, bad))
    if r:
        yv = _eval_matrix([[ys[k][i] for k in range(r)] for i in range(n)], pts, m)
        bad = [i for i in range(m) if _rank(yv[i]) != r]
        rep.record("rank (Y1|...|Yr) = r", not bad, _witness(pts, bad))
    rep.checks["level sets connected"] = {"ok": None, "note": "assumed, not testable by sampling"}
    return rep


def _witness(pts, bad):
    if not bad:
        return None
    i = bad[0]
    return {k: float(np.broadcast_to(v, (SPAN_POINTS,))[i]) for k, v in pts.items()}


def _fail_if(chk, condition):
    if not chk.ok:
        raise ReductionError(condition, chk.witness, f"residual {chk.value}")


def reduce_sde(
    sde: SdeModel,
    spec: ReductionMapSpec,
    vs: Sequence[InfinitesimalTransformation],
    proposed: tuple[Vec, Mat] | None = None,
    *,
    trials: int = 100,
    tol: float = 1e-9,
    check_map: bool = True,
) -> ReducedPair:
    """Reduced SDE mu' o Psi = L(Psi), sigma' o Psi = grad(Psi).sigma.

    Re-expression goes through ``spec.section`` or a user ``proposed``
    (mu', sigma') in reduced variables; either way the defining identities are
    re-checked on the original domain."""
    sampler = sde.sampler()
    if check_map:
        rep = verify_reduction_map(spec, sde.vars, [v.y for v in vs], sampler, trials, tol)
        if not rep.ok:
            raise ReductionError(rep.failed, rep.witness)
    drift = tuple(generator_apply(sde, p) for p in spec.psi)
    load = matmul(jacobian(spec.psi, sde.vars), sde.sigma)
    for k, v in enumerate(vs):
        name = f"V{k + 1}"
        _fail_if(zero_check(v.tau, sampler, trials, tol), f"{name} quasi-strong (tau = 0)")
        _fail_if(zero_check_all(flat(matmul(load, v.c)), sampler, trials, tol), f"grad(Psi).sigma.C of {name} = 0")
        _fail_if(zero_check_all([directional(v.y, sde.vars, e) for e in drift], sampler, trials, tol), f"{name}(L(Psi)) = 0")
        _fail_if(zero_check_all(flat(directional_mat(v.y, sde.vars, load)), sampler, trials, tol), f"{name}(grad(Psi).sigma) = 0")
    rv = tuple(spec.reduced_vars)
    allowed = set(rv) | set(sde.params)
    if proposed is not None:
        mu_r, sig_r = tuple(as_expr(e) for e in proposed[0]), tuple(tuple(as_expr(e) for e in row) for row in proposed[1])
    elif spec.section is not None:
        sec = {k: as_expr(e) for k, e in spec.section.items()}
        mu_r, sig_r = subs_vec(drift, sec), subs_mat(load, sec)
    else:
        raise ReductionError("re-expression", detail="need a section or a proposed reduced SDE")
    for e in list(mu_r) + flat(sig_r):
        extra = e.free - allowed
        if extra:
            raise ReductionError("re-expression", detail=f"original names {sorted(extra)} survive in {to_text(e)}")
    along = dict(zip(rv, spec.psi))
    back_mu = subs_vec(mu_r, along)
    back_sig = subs_mat(sig_r, along)
    _fail_if(zero_check_all([sub(a, b) for a, b in zip(back_mu, drift)], sampler, trials, tol), "mu' o Psi = L(Psi)")
    _fail_if(zero_check_all([sub(a, b) for a, b in zip(flat(back_sig), flat(load))], sampler, trials, tol), "sigma' o Psi = grad(Psi).sigma")
    domain = Domain({}, (), (sde.domain, dict(along), dict(sde.params)))
    reduced = SdeModel(rv, mu_r, sig_r, dict(sde.params), domain, (sde.name or "sde") + "/reduced")
    return ReducedPair(sde, reduced, tuple(spec.psi))


def in_span(target: Vec, basis: Sequence[Vec], vars, sampler, n_points: int = SPAN_POINTS, tol: float = SPAN_TOL):
    """Pointwise (C^inf-module) membership: at every sampled x, target(x) lies
    in span{basis_k(x)}, judged by a relative least-squares residual."""
    pts = _points(sampler, n_points, stream=13)
    t = _eval_matrix([[e] for e in target], pts, n_points)[:, :, 0]
    if not basis:
        worst = float(np.abs(t).max())
        return worst <= tol, worst
    b = _eval_matrix([[y[i] for y in basis] for i in range(len(target))], pts, n_points)
    worst = 0.0
    for i in range(n_points):
        coef, *_ = np.linalg.lstsq(b[i], t[i], rcond=None)
        res = np.linalg.norm(b[i] @ coef - t[i]) / (1.0 + np.linalg.norm(t[i]))
        worst = max(worst, float(res))
    return worst <= tol, worst


def reduce_symmetry(
    pair: ReducedPair,
    v: InfinitesimalTransformation,
    generators: Sequence[InfinitesimalTransformation],
    spec: ReductionMapSpec,
    *,
    c_tilde: Mat | None = None,
    trials: int = 100,
    tol: float = 1e-9,
) -> InfinitesimalTransformation:
    """Inherited symmetry (Psi_*(Y), C', tau') on the reduced SDE.

    Requires [Y, Y_i] in span{Y_1..Y_k}, Y_i(C) = 0 and Y_i(tau) = 0.  With a
    ``c_tilde`` the weaker pair Y_i(C + C~) = 0, grad(Psi).sigma.C~ = 0 is
    checked instead and C' o Psi = C + C~."""
    sde = pair.original
    xs = sde.vars
    sampler = sde.sampler()
    ys = [g.y for g in generators]
    c_eff = v.c if c_tilde is None else tuple(tuple(as_expr(a) + as_expr(b) for a, b in zip(r1, r2)) for r1, r2 in zip(v.c, c_tilde))
    for k, g in enumerate(generators):
        br = lie_bracket(v, g).y
        ok, res = in_span(br, ys, xs, sampler)
        if not ok:
            raise ReductionError(f"[Y, Y{k + 1}] in span of generators", detail=f"least-squares residual {res:.3e}")
        label = "Y(C)" if c_tilde is None else "Y(C + C~)"
        _fail_if(zero_check_all(flat(directional_mat(g.y, xs, c_eff)), sampler, trials, tol), f"Y{k + 1}: {label} = 0")
        _fail_if(zero_check(directional(g.y, xs, v.tau), sampler, trials, tol), f"Y{k + 1}(tau) = 0")
    if c_tilde is not None:
        load = matmul(jacobian(spec.psi, xs), sde.sigma)
        _fail_if(zero_check_all(flat(matmul(load, c_tilde)), sampler, trials, tol), "grad(Psi).sigma.C~ = 0")
    if spec.section is None:
        raise ReductionError("re-expression", detail="reduce_symmetry needs a section")
    sec = {k: as_expr(e) for k, e in spec.section.items()}
    y_img = matvec(jacobian(spec.psi, xs), v.y)
    # projectability of Psi_*(Y) along the fibres
    for k, g in enumerate(generators):
        _fail_if(zero_check_all([directional(g.y, xs, e) for e in y_img], sampler, trials, tol), f"Y{k + 1}(grad(Psi).Y) = 0")
    red = pair.reduced
    out = InfinitesimalTransformation(
        red.vars, subs_vec(y_img, sec), subs_mat(c_eff, sec), subs_vec((v.tau,), sec)[0], (v.name or "V") + "'"
    )
    verdict = is_symmetry(red, out, trials, tol)
    if not verdict.ok:
        raise ReductionError("inherited symmetry re-verification", verdict.witness, verdict.failed_entry or "")
    return out


@dataclass
class CanonicalVerdict:
    ok: bool
    blocks: tuple[int, ...] = ()
    reason: str = ""

    def as_dict(self):
        return {"canonical": self.ok, "blocks": list(self.blocks), "reason": self.reason}


def check_canonical_form(ys: Sequence[Vec], sampler, trials: int = 100, tol: float = 1e-9) -> CanonicalVerdict:
    """Block unit-upper-triangular test of (Y_1|...|Y_r); returns the
    coarsest block sizes i_1..i_l."""
    r = len(ys)
    if r == 0:
        return CanonicalVerdict(True, ())
    n = len(ys[0])
    if r > n:
        return CanonicalVerdict(False, reason="more fields than coordinates")

    def zero(e):
        return zero_check(e, sampler, trials, tol).ok

    a = [[ys[k][i] for k in range(r)] for i in range(n)]
    for i in range(r):
        if not zero(sub(a[i][i], ONE)):
            return CanonicalVerdict(False, reason=f"diagonal entry ({i + 1},{i + 1}) is {to_text(a[i][i])}, not 1")
    for i in range(n):
        for k in range(min(i, r)):
            if not zero(a[i][k]):
                return CanonicalVerdict(False, reason=f"entry ({i + 1},{k + 1}) below the diagonal is nonzero")
    blocks = []
    start = 0
    while start < r:
        end = start + 1
        while end < r and all(zero(a[p][end]) for p in range(start, end)):
            end += 1
        blocks.append(end - start)
        start = end
    return CanonicalVerdict(True, tuple(blocks))


@dataclass
class SolvabilityReport:
    dims: tuple[int, ...]
    verdict: str
    regular: bool
    regular_witness: dict | None = None

    @property
    def solvable(self) -> bool:
        return self.verdict in ("abelian", "solvable")

    def as_dict(self):
        return {"derived_series": list(self.dims), "verdict": self.verdict, "regular": self.regular, "regular_witness": self.regular_witness}


def _as_triad(v, vars) -> InfinitesimalTransformation:
    if isinstance(v, InfinitesimalTransformation):
        return v
    return InfinitesimalTransformation.strong(vars, v, 1)


def _independent(cands: Sequence[InfinitesimalTransformation], pts, n_points, tol=SPAN_TOL):
    """Greedy real-linear basis selection on stacked sample values."""
    chosen, cols = [], []
    for c in cands:
        vals = evaluate_many(c.entries(), pts, shape=(n_points,))
        col = np.concatenate([np.asarray(v, dtype=float) for v in vals])
        if np.linalg.norm(col) <= tol:
            continue
        if cols:
            a = np.column_stack(cols)
            coef, *_ = np.linalg.lstsq(a, col, rcond=None)
            if np.linalg.norm(a @ coef - col) <= tol * np.linalg.norm(col):
                continue
        chosen.append(c)
        cols.append(col)
    return chosen


def check_solvable(vs, vars: Sequence[str], sampler, n_points: int = SPAN_POINTS) -> SolvabilityReport:
    """Derived series G^(i+1) = [G^(i), G^(i)] of the real span of ``vs``."""
    vars = tuple(vars)
    triads = [_as_triad(v, vars) for v in vs]
    pts = _points(sampler, n_points, stream=17)
    current = _independent(triads, pts, n_points)
    dims = [len(current)]
    while current:
        brackets = [lie_bracket(a, b) for i, a in enumerate(current) for b in current[i + 1 :]]
        nxt = _independent(brackets, pts, n_points)
        if len(nxt) >= len(current):
            dims.append(len(nxt))
            break
        dims.append(len(nxt))
        current = nxt
    if dims[-1] == 0:
        verdict = "abelian" if len(dims) <= 2 else "solvable"
    else:
        verdict = "non-solvable"
    regular, wit = _regular(triads, vars, pts, n_points)
    return SolvabilityReport(tuple(dims), verdict, regular, wit)


def _regular(triads, vars, pts, n_points):
    r = len(triads)
    if r == 0:
        return True, None
    n = len(vars)
    yv = _eval_matrix([[t.y[i] for t in triads] for i in range(n)], pts, n_points)
    for i in range(n_points):
        if _rank(yv[i]) < r:
            return False, {k: float(np.broadcast_to(v, (n_points,))[i]) for k, v in pts.items()}
    return True, None


@dataclass(frozen=True)
class PlanStep:
    coord: str
    drift: Expr
    noise: tuple[Expr, ...]
    depends_on: tuple[str, ...]

    def as_dict(self):
        return {
            "coord": self.coord,
            "drift": to_text(self.drift),
            "noise": [to_text(e) for e in self.noise],
            "depends_on": list(self.depends_on),
        }


@dataclass(frozen=True)
class ReconstructionPlan:
    """Quadrature plan: steps run in order; ``assemble`` (optional) maps the
    canonical coordinates back to the original state (the map F)."""

    coords: tuple[str, ...]
    reduced_vars: tuple[str, ...]
    steps: tuple[PlanStep, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    assemble: Mapping[str, Expr] | None = None
    m: int = 1

    @property
    def kind(self) -> str:
        if not self.steps:
            return "empty"
        rec = {s.coord for s in self.steps}
        return "progressive" if any(set(s.depends_on) & rec for s in self.steps) else "direct"

    def check_order(self) -> bool:
        """No integrand refers to a coordinate that is not yet reconstructed."""
        known = set(self.reduced_vars) | set(self.params)
        for s in self.steps:
            names = set().union(s.drift.free, *(e.free for e in s.noise))
            if not names <= known:
                return False
            known.add(s.coord)
        return True

    def as_dict(self):
        return {
            "coords": list(self.coords),
            "reduced_vars": list(self.reduced_vars),
            "kind": self.kind,
            "m": self.m,
            "steps": [s.as_dict() for s in self.steps],
            "assemble": None if self.assemble is None else {k: to_text(e) for k, e in self.assemble.items()},
        }

    @classmethod
    def from_dict(cls, d, params=None):
        params = dict(params or {})
        p = list(params)
        steps = tuple(
            PlanStep(s["coord"], parse(s["drift"], p), tuple(parse(e, p) for e in s["noise"]), tuple(s["depends_on"]))
            for s in d["steps"]
        )
        asm = None if d.get("assemble") is None else {k: parse(e, p) for k, e in d["assemble"].items()}
        return cls(tuple(d["coords"]), tuple(d["reduced_vars"]), steps, params, asm, d.get("m", 1))


class TriangularityError(ReductionError):
    pass


def build_reconstruction_plan(
    sde: SdeModel,
    r: int,
    coords: Sequence[str] | None = None,
    *,
    assemble: Mapping[str, Expr] | None = None,
    trials: int = 100,
    tol: float = 1e-9,
) -> ReconstructionPlan:
    """Triangular quadrature plan for an SDE whose first r coordinates (in
    ``coords`` order) carry canonical-form symmetries.

    Row j (1-based, j <= r) must not depend on coordinates 1..j; coordinate r
    is then reconstructed first, down to coordinate 1."""
    coords = tuple(coords or sde.vars)
    if sorted(coords) != sorted(sde.vars):
        raise ValueError(f"coords {coords} are not a permutation of {sde.vars}")
    if not 0 <= r <= sde.n:
        raise ValueError(f"r = {r} outside [0, {sde.n}]")
    sampler = sde.sampler()
    idx = {v: i for i, v in enumerate(sde.vars)}
    reduced = coords[r:]
    anchor = _anchor_point(sampler, coords[:r])
    steps = []
    for j in range(r, 0, -1):
        row = idx[coords[j - 1]]
        entries = [sde.mu[row], *sde.sigma[row]]
        for i in range(1, j + 1):
            for e in entries:
                chk = zero_check(diff(e, coords[i - 1]), sampler, trials, tol)
                if not chk.ok:
                    raise TriangularityError(
                        f"row {coords[j - 1]} independent of {coords[i - 1]}", chk.witness, f"d/d{coords[i - 1]} = {chk.value}"
                    )
        # coordinates the row provably ignores may still occur structurally;
        # pin them to an admissible constant so the integrand only names
        # what it depends on
        pin = {c: anchor[c] for c in coords[:j]}
        pinned = [substitute(e, pin) for e in entries]
        _fail_if(zero_check_all([sub(a, b) for a, b in zip(pinned, entries)], sampler, trials, tol), f"pinning row {coords[j - 1]}")
        names = set().union(*(e.free for e in pinned)) & set(coords)
        steps.append(PlanStep(coords[j - 1], pinned[0], tuple(pinned[1:]), tuple(c for c in coords if c in names)))
    plan = ReconstructionPlan(coords, reduced, tuple(steps), dict(sde.params), assemble, sde.m)
    assert plan.check_order()
    return plan


def _anchor_point(sampler, names) -> dict:
    pts = sampler.sample(1, stream=19)
    return {k: Const(Fraction(float(np.ravel(pts[k])[0])).limit_denominator(1000)) for k in names}


@dataclass
class IntegrabilityVerdict:
    verdict: str
    reason: str
    solvability: SolvabilityReport | None = None

    def as_dict(self):
        return {"verdict": self.verdict, "reason": self.reason, "solvability": None if self.solvability is None else self.solvability.as_dict()}


def is_integrable(sde: SdeModel, vs: Sequence[InfinitesimalTransformation], trials: int = 100, tol: float = 1e-9) -> IntegrabilityVerdict:
    """Sufficient test: n-dimensional solvable, regular algebra of strong
    symmetries.  Failing it yields "unknown", never "no"."""
    sampler = sde.sampler()
    for k, v in enumerate(vs):
        strong = zero_check_all(flat(v.c) + [v.tau], sampler, trials, tol)
        if not strong.ok:
            return IntegrabilityVerdict("unknown", f"V{k + 1} is not strong")
        if not is_symmetry(sde, v, trials, tol).ok:
            return IntegrabilityVerdict("unknown", f"V{k + 1} is not a symmetry")
    rep = check_solvable(vs, sde.vars, sampler)
    if not rep.solvable:
        return IntegrabilityVerdict("unknown", "symmetry algebra is not solvable", rep)
    if rep.dims[0] != sde.n:
        return IntegrabilityVerdict("unknown", f"algebra dimension {rep.dims[0]} < n = {sde.n}; the test is only sufficient", rep)
    if not rep.regular:
        return IntegrabilityVerdict("unknown", "generators not pointwise independent", rep)
    return IntegrabilityVerdict("yes", "n-dimensional solvable regular algebra of strong symmetries", rep)
