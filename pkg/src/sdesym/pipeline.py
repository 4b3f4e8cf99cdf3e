"""Scenario-driven orchestration: verify, find, reduce and the full pipeline.

Every runner returns ``(exit_code, report)`` where the report is a plain,
JSON-serializable dict.  Reports carry no timings so they are deterministic
per (scenario, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .expr import Expr, substitute
from .mc import StatReport, bonferroni, ks_test, moment_test, reconstruct, simulate, transform_paths, write_csv
from .numeric import DomainError, evaluate_many
from .printing import to_text
from .reduction import (
    ReductionError,
    ReductionMapSpec,
    build_reconstruction_plan,
    check_canonical_form,
    check_solvable,
    is_integrable,
    reduce_sde,
    reduce_symmetry,
    verify_reduction_map,
)
from .sampling import SamplerExhausted, zero_check_all
from .scenario import Scenario, ScenarioError, TransformSpec
from .symmetry import AnsatzSpace, InconclusiveError, find_symmetries, is_symmetry, verify_strongification
from .transform import FlowExit, apply_to_sde, flow, pushforward, validate_transformation

REPORT_SCHEMA = "sdesym.report"
REPORT_VERSION = 1

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2, 3

MARGINALS_NOTE = (
    "weak equivalence is certified only for one-dimensional marginals at the sampled times"
)


@dataclass
class Settings:
    """Run options; ``dt`` and ``n_paths`` left as None defer to the scenario's
    per-check values, then to the defaults below."""

    seed: int = 42
    dt: float | None = None
    n_paths: int | None = None
    level: float = 0.01
    out: Path | None = None
    trials: int = 100
    tol: float = 1e-9
    n_workers: int = 1

    default_dt: float = 1e-3
    default_paths: int = 10_000

    def step(self, block: dict | None = None) -> float:
        if self.dt is not None:
            return float(self.dt)
        return float((block or {}).get("dt", self.default_dt))

    def paths(self, block: dict | None = None) -> int:
        if self.n_paths is not None:
            return int(self.n_paths)
        return int((block or {}).get("n_paths", self.default_paths))


class StageFailed(Exception):
    def __init__(self, stage: str, detail, code: int = EXIT_FAIL):
        super().__init__(f"{stage}: {detail}")
        self.stage = stage
        self.detail = detail
        self.code = code


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Expr):
        return to_text(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


class Run:
    """Stage bookkeeping shared by all commands."""

    def __init__(self, command: str, sc: Scenario, st: Settings):
        self.sc, self.st = sc, st
        self.report = {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "command": command,
            "scenario": sc.name,
            "settings": {"seed": st.seed, "dt": st.dt, "paths": st.n_paths, "level": st.level, "trials": st.trials, "tol": st.tol},
            "assumptions": list(sc.assumptions),
            "warnings": [],
            "stages": [],
        }
        self._cache: dict = {}

    def stage(self, name: str, fn: Callable[[], dict]):
        try:
            details = fn()
        except StageFailed as exc:
            self.report["stages"].append({"stage": name, "status": "fail", "detail": exc.detail})
            raise StageFailed(name, exc.detail, exc.code) from None
        except InconclusiveError as exc:
            self.report["stages"].append({"stage": name, "status": "inconclusive", "detail": str(exc)})
            raise StageFailed(name, str(exc), EXIT_INCONCLUSIVE) from None
        except (ReductionError, DomainError, SamplerExhausted, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            detail = {"error": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, ReductionError):
                detail.update(condition=exc.condition, witness=exc.witness)
            self.report["stages"].append({"stage": name, "status": "fail", "detail": detail})
            raise StageFailed(name, detail) from None
        ok = details.pop("ok", True)
        entry = {"stage": name, "status": "pass" if ok else "fail", **details}
        self.report["stages"].append(entry)
        if not ok:
            raise StageFailed(name, {k: v for k, v in details.items() if k in ("failed", "reason")} or "expectation not met")
        return entry

    def finish(self, code: int) -> tuple[int, dict]:
        self.report["ok"] = code == EXIT_PASS
        self.report["exit_code"] = code
        # round trip through JSON so what callers see is what gets written
        rep = json.loads(json.dumps(self.report, default=_jsonable))
        if self.st.out is not None:
            out = Path(self.st.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{self.sc.name}.{self.report['command']}.json").write_text(json.dumps(rep, indent=2) + "\n")
        return code, rep

    # -- shared symbolic objects -------------------------------------------------
    def cached(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def sde(self):
        return self.cached("sde", self.sc.model)

    @property
    def transformation(self):
        return self.cached("T", self.sc.transform)

    @property
    def transformed(self):
        return self.cached("out", lambda: apply_to_sde(self.transformation, self.sde))

    def generator(self, name: str):
        return self.cached(("gen", name), lambda: self.sc.symmetry_named(name))

    def pushed(self, name: str):
        def make():
            t = self.transformation
            return pushforward(t, self.generator(name), preimage=t.phi_inv is None, sampler=self.sde.sampler())

        return self.cached(("push", name), make)


def _execute(command: str, sc: Scenario, st: Settings, stages) -> tuple[int, dict]:
    run = Run(command, sc, st)
    code = EXIT_PASS
    try:
        for name, fn in stages(run):
            run.stage(name, fn)
    except StageFailed as exc:
        code = exc.code
        run.report["failed_stage"] = exc.stage
    if not run.report["stages"]:
        run.report["warnings"].append("no applicable stages; vacuous pass")
    return run.finish(code)


# ---------------------------------------------------------------------------
# stages


def _stage_verify(run: Run) -> dict:
    sc, st = run.sc, run.st
    results, failed = [], []
    if not sc.symmetries:
        run.report["warnings"].append("scenario lists no symmetries; verification is vacuous")
    for spec in sc.symmetries:
        v = run.generator(spec.name)
        verdict = is_symmetry(run.sde, v, st.trials, st.tol)
        expect_pass = spec.expect == "pass"
        met = verdict.ok == expect_pass
        results.append({"name": spec.name, "expect": spec.expect, "met": met, **verdict.as_dict()})
        if not met:
            failed.append(spec.name)
    return {"ok": not failed, "failed": failed, "symmetries": results}


def _stage_flow(run: Run) -> dict:
    f = run.sc.flow
    v = run.generator(f["symmetry"])
    sde = run.sde
    x0 = {k: float(val) for k, val in f["x0"].items()}
    try:
        end = flow(v, float(f["a"]), x0, guards=sde.domain.guards, steps=int(f.get("steps", 4096)))
        outcome = {"outcome": "completed", "end_point": end}
    except FlowExit as exc:
        outcome = {"outcome": "exit", "exit_parameter": exc.parameter, "last_point": exc.point}
    expect = f.get("expect", "exit")
    return {"ok": outcome["outcome"] == expect, "expect": expect, "a": float(f["a"]), "x0": x0, **outcome}


def _stage_strongify(run: Run) -> dict:
    t = run.transformation
    gens = [run.generator(s.name) for s in run.sc.symmetries if s.expect == "pass"]
    rep = verify_strongification(gens, t.b, t.eta, run.sde.sampler(), run.st.trials, run.st.tol)
    return {"ok": rep.ok, **rep.as_dict()}


def _compare(exprs, targets, sampler, st) -> dict:
    chk = zero_check_all([a - b for a, b in zip(exprs, targets)], sampler, st.trials, st.tol)
    return chk.as_dict()


def _expected_in(run: Run, texts, names) -> list[Expr]:
    """Parse expected expressions written in the image coordinates; in
    pre-image form they are pulled back through Phi for comparison."""
    es = [run.sc.parse_in(x, names, "expected") for x in texts]
    if run.transformed.preimage:
        along = dict(zip(run.transformation.dst_vars, run.transformation.phi))
        es = [substitute(e, along) for e in es]
    return es


def _stage_transform(run: Run) -> dict:
    sc, st = run.sc, run.st
    t, out = run.transformation, run.transformed
    valid = validate_transformation(t, run.sde.sampler(), st.trials, st.tol)
    cmp_sampler = run.sde.sampler() if out.preimage else out.sampler()
    details: dict = {
        "validation": valid,
        "form": "pre-image" if out.preimage else "image",
        "mu": [to_text(e) for e in out.mu],
        "sigma": [[to_text(e) for e in row] for row in out.sigma],
    }
    ok = bool(valid["ok"])
    exp = (sc.expected or {}).get("transformed")
    dst = t.dst_vars
    if exp:
        got = list(out.mu) + [x for row in out.sigma for x in row]
        want = _expected_in(run, list(exp["mu"]) + [x for row in exp["sigma"] for x in row], dst)
        if len(got) != len(want):
            raise StageFailed("transform", "expected coefficients have the wrong shape", EXIT_INPUT)
        details["expected_match"] = _compare(got, want, cmp_sampler, st)
        ok = ok and details["expected_match"]["ok"]
    pushes = []
    for item in (sc.expected or {}).get("pushforward", []):
        pv = run.pushed(item["of"])
        want_spec = {"name": item["of"], "y": item["y"], "c": item.get("c"), "tau": item.get("tau", "0")}
        want = _expected_in(run, _triad_texts(want_spec, run.sc.m), dst)
        rec = {"of": item["of"], "pushforward": [to_text(e) for e in pv.entries()], "match": _compare(pv.entries(), want, cmp_sampler, st)}
        if not out.preimage:
            rec["symmetry_of_transformed"] = is_symmetry(out, pv, st.trials, st.tol).as_dict()["verdict"]
            rec["match"]["ok"] = rec["match"]["ok"] and rec["symmetry_of_transformed"] == "yes"
        ok = ok and rec["match"]["ok"]
        pushes.append(rec)
    details["pushforwards"] = pushes
    return {"ok": ok, **details}


def _triad_texts(d: dict, m: int) -> list[str]:
    c = d.get("c") or [["0"] * m for _ in range(m)]
    return list(d["y"]) + [x for row in c for x in row] + [str(d.get("tau", "0"))]


def _stage_extra_pushforwards(run: Run) -> dict:
    sc, st = run.sc, run.st
    recs, ok = [], True
    for item in sc.pushforwards or []:
        t = sc.transform(TransformSpec.from_dict(item["transformation"]))
        v = run.generator(item["symmetry"])
        pv = pushforward(t, v, sampler=run.sde.sampler())
        want = [sc.parse_in(x, t.dst_vars, "expected pushforward") for x in _triad_texts(item["expect"], sc.m)]
        out = apply_to_sde(t, run.sde)
        match = _compare(pv.entries(), want, out.sampler(), st)
        recs.append({"label": item.get("label", ""), "symmetry": item["symmetry"], "pushforward": [to_text(e) for e in pv.entries()], "match": match})
        ok = ok and match["ok"]
    return {"ok": ok, "pushforwards": recs}


def _reorder(v, dst_vars, coords):
    idx = [list(dst_vars).index(c) for c in coords]
    return tuple(v.y[i] for i in idx)


def _stage_canonical(run: Run) -> dict:
    can, st = run.sc.canonical, run.st
    t = run.transformation
    coords = can.get("coords") or list(t.dst_vars)
    ys = [_reorder(run.pushed(g), t.dst_vars, coords) for g in can["generators"]]
    verdict = check_canonical_form(ys, run.transformed.sampler(), st.trials, st.tol)
    details = {"coords": coords, "canonical": verdict.as_dict()}
    ok = verdict.ok
    if "blocks" in can:
        ok = ok and list(verdict.blocks) == list(can["blocks"])
        details["expected_blocks"] = can["blocks"]
    if "solvable" in can:
        gens = [run.generator(g) for g in can["generators"]]
        sol = check_solvable(gens, run.sde.vars, run.sde.sampler())
        details["solvability"] = sol.as_dict()
        ok = ok and list(sol.dims) == list(can["solvable"]) and sol.solvable
    return {"ok": ok, **details}


def _reduction_source(run: Run):
    red = run.sc.reduction
    if red.get("on") == "transformed":
        if run.transformed.preimage:
            raise StageFailed("reduce", "reduction in image coordinates needs phi_inv", EXIT_INPUT)
        return run.transformed, [run.pushed(g) for g in red["generators"]]
    return run.sde, [run.generator(g) for g in red["generators"]]


def _stage_reduce(run: Run) -> dict:
    sc, st = run.sc, run.st
    red = sc.reduction
    src, gens = _reduction_source(run)
    rv = list(red["reduced_vars"])
    psi = tuple(sc.parse_in(x, src.vars, "Psi") for x in red["psi"])
    section = None
    if red.get("section") is not None:
        section = {k: sc.parse_in(x, rv, "section") for k, x in red["section"].items()}
    spec = ReductionMapSpec(tuple(rv), psi, section)
    mapping = verify_reduction_map(spec, src.vars, [g.y for g in gens], src.sampler(), st.trials, st.tol)
    if not mapping.ok:
        return {"ok": False, "map": mapping.as_dict(), "failed": mapping.failed}
    proposed = None
    if red.get("proposed"):
        p = red["proposed"]
        proposed = (
            tuple(sc.parse_in(x, rv, "proposed drift") for x in p["mu"]),
            tuple(tuple(sc.parse_in(x, rv, "proposed diffusion") for x in row) for row in p["sigma"]),
        )
    pair = reduce_sde(src, spec, gens, proposed, trials=st.trials, tol=st.tol, check_map=False)
    run._cache["pair"] = pair
    details = {
        "map": mapping.as_dict(),
        "reduced": {"vars": rv, "mu": [to_text(e) for e in pair.reduced.mu], "sigma": [[to_text(e) for e in r] for r in pair.reduced.sigma]},
    }
    ok = True
    if red.get("expected"):
        e = red["expected"]
        want = [sc.parse_in(x, rv, "expected reduced") for x in list(e["mu"]) + [x for row in e["sigma"] for x in row]]
        got = list(pair.reduced.mu) + [x for row in pair.reduced.sigma for x in row]
        details["expected_match"] = _compare(got, want, pair.reduced.sampler(), st)
        ok = details["expected_match"]["ok"]
    inherits = []
    for item in red.get("inherit", []):
        v = run.generator(item["symmetry"]) if red.get("on") != "transformed" else run.pushed(item["symmetry"])
        try:
            w = reduce_symmetry(pair, v, gens, spec, trials=st.trials, tol=st.tol)
            rec = {"outcome": "pass", "inherited": [to_text(x) for x in w.entries()]}
        except ReductionError as exc:
            rec = {"outcome": "fail", "condition": exc.condition, "reason": str(exc)}
        rec.update(symmetry=item["symmetry"], expect=item.get("expect", "pass"))
        rec["met"] = rec["outcome"] == rec["expect"]
        ok = ok and rec["met"]
        inherits.append(rec)
    details["inherit"] = inherits
    return {"ok": ok, **details}


def _stage_integrability(run: Run) -> dict:
    spec = run.sc.integrability
    if spec.get("on") == "transformed":
        sde = run.transformed
        gens = [run.pushed(s.name) for s in run.sc.symmetries if s.expect == "pass"]
    else:
        sde = run.sde
        gens = [run.generator(s.name) for s in run.sc.symmetries if s.expect == "pass"]
    verdict = is_integrable(sde, gens, run.st.trials, run.st.tol)
    expect = spec.get("expect")
    return {"ok": expect is None or verdict.verdict == expect, "expect": expect, **verdict.as_dict()}


def _plan(run: Run):
    def make():
        can = run.sc.canonical
        t = run.transformation
        assemble = None
        if can.get("assemble") == "phi_inv":
            assemble = dict(t.phi_inv)
        return build_reconstruction_plan(run.transformed, int(can["plan_r"]), can.get("coords"), assemble=assemble, trials=run.st.trials, tol=run.st.tol)

    return run.cached("plan", make)


def _stage_plan(run: Run) -> dict:
    plan = _plan(run)
    return {"ok": plan.check_order(), "plan": plan.as_dict(), "triangular": plan.check_order()}


# -- Monte Carlo -------------------------------------------------------------


def _x0(run: Run, block_x0=None) -> dict:
    x0 = block_x0 or run.sc.mc["x0"]
    missing = [v for v in run.sc.vars if v not in x0]
    if missing:
        raise StageFailed("mc", f"x0 misses {missing}", EXIT_INPUT)
    return {k: float(x0[k]) for k in run.sc.vars}


def _simulate(run: Run, sde, x0, t_end, dt, n, seed):
    def make():
        return simulate(sde, x0, t_end, dt, n, seed, n_workers=run.st.n_workers)

    key = ("sim", sde.name, tuple(sorted(x0.items())), t_end, dt, n, seed)
    return run.cached(key, make)


def _export(run: Run, e, label: str):
    if run.st.out is None:
        return None
    out = Path(run.st.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{run.sc.name}.{label}.csv"
    write_csv(e, path, every=max(1, e.n_steps // 50))
    return path.name


def _image_x0(run: Run, x0: dict) -> dict:
    t = run.transformation
    vals = evaluate_many(list(t.phi), {**x0})
    return {k: float(v) for k, v in zip(t.dst_vars, vals)}


def _stage_ks(run: Run) -> dict:
    st, mc = run.st, run.sc.mc
    block = mc["ks"]
    out = run.transformed
    if out.preimage:
        raise StageFailed("ks", "transformed SDE is in pre-image form and cannot be simulated", EXIT_INPUT)
    times = [float(x) for x in block["times"]]
    dt, n = st.step(block), st.paths(block)
    x0 = _x0(run)
    e = _simulate(run, run.sde, x0, float(mc["t_end"]), dt, n, st.seed)
    tp = transform_paths(run.transformation, e)
    horizon = float(tp.times[-1])
    if max(times) > horizon + 1e-12:
        raise StageFailed("ks", f"t' = {max(times)} beyond the usable clock horizon {horizon:.4g}")
    t_direct = float(np.ceil(max(times) / dt - 1e-9) * dt)
    direct = _simulate(run, out, _image_x0(run, x0), t_direct, dt, n, st.seed + 1)
    ncomp = len(out.vars)
    level = bonferroni(st.level, len(times) * ncomp)
    rep = StatReport(meta={"N": n, "dt": dt, "seed": st.seed, "times": times, "family_level": st.level, "per_test_level": level})
    for tt in times:
        for name in out.vars:
            a = tp.marginal(name, tt)
            b = direct.marginal(name, tt)
            if np.ptp(a) == 0 and np.ptp(b) == 0:
                same = bool(np.allclose(a[:1], b[:1]))
                rep.tests.append({"test": "ks", "name": f"{name}@{tt}", "statistic": 0.0 if same else 1.0, "p_value": 1.0 if same else 0.0, "threshold": level, "verdict": "pass" if same else "fail", "degenerate": True})
                continue
            rep.extend(ks_test(a, b, level, name=f"{name}@{tt}"))
    details = {
        "report": rep.as_dict(),
        "alive_fraction": {"original": e.alive_fraction(), "transformed": direct.alive_fraction()},
        "clock": {k: v for k, v in tp.meta.items() if k in ("clock", "t_prime_horizon", "clock_end_min", "clock_end_max")},
        "note": MARGINALS_NOTE,
        "exports": [x for x in (_export(run, e, "original"), _export(run, tp, "pathwise"), _export(run, direct, "transformed")) if x],
    }
    return {"ok": rep.ok, **details}


def _stage_reconstruct(run: Run) -> dict:
    st, mc = run.st, run.sc.mc
    block = mc["reconstruct"]
    dt, n = st.step(block), st.paths(block)
    x0 = _x0(run)
    t_at = float(block.get("t", mc["t_end"]))
    e = _simulate(run, run.sde, x0, float(mc["t_end"]), dt, n, st.seed)
    tp = transform_paths(run.transformation, e)
    plan = _plan(run)
    start = {c: float(tp.states[0, 0, tp.vars.index(c)]) for c in plan.coords}
    rec = reconstruct(plan, tp, start)
    ref = e if block.get("compare", "original") == "original" else tp
    k = ref.index_of(t_at)
    alive = ref.alive_at(k) & rec.alive_at(k)
    rms = {}
    for name in rec.vars:
        d = rec.column(name)[alive, k] - ref.column(name)[alive, k]
        rms[name] = float(np.sqrt(np.mean(d**2))) if d.size else float("nan")
    worst = max(rms.values())
    tol = float(block.get("rms_tol", 5e-2))
    passthrough = all(np.array_equal(rec.column(v), tp.column(v)) for v in plan.reduced_vars) if plan.assemble is None else None
    return {
        "ok": bool(worst < tol) and passthrough is not False,
        "rms": rms,
        "max_rms": worst,
        "rms_tol": tol,
        "t": t_at,
        "dt": dt,
        "N": n,
        "alive_fraction": float(alive.mean()),
        "compare": block.get("compare", "original"),
        "reduced_unchanged": passthrough,
        "exports": [x for x in (_export(run, rec, "reconstructed"),) if x],
    }


def kp_moments(alpha, beta, gamma, lam, nu, x0, t) -> tuple[float, float]:
    """Mean and variance of dX = (lam X + nu) dt + sqrt(alpha X^2 + 2 beta X + gamma) dW.

    The first two moments solve a closed linear ODE; its affine flow is the
    exponential of a 3x3 generator acting on (m1, m2, 1)."""
    a = np.array(
        [
            [lam, 0.0, nu],
            [2 * nu + 2 * beta, 2 * lam + alpha, gamma],
            [0.0, 0.0, 0.0],
        ]
    )
    m1, m2, _ = expm(a * t) @ np.array([x0, x0 * x0, 1.0])
    return float(m1), float(m2 - m1 * m1)


ORACLES = {"kp-moments": lambda p, x0, t: kp_moments(p["alpha"], p["beta"], p["gamma"], p["lam"], p["nu"], x0, t)}


def _stage_moments(run: Run) -> dict:
    st, mc = run.st, run.sc.mc
    block = mc["moments"]
    oracle = ORACLES.get(block["oracle"])
    if oracle is None:
        raise StageFailed("moments", f"unknown oracle {block['oracle']!r}", EXIT_INPUT)
    dt, n = st.step(block), st.paths(block)
    x0 = _x0(run)
    t_at = float(block.get("t", mc["t_end"]))
    e = _simulate(run, run.sde, x0, float(mc["t_end"]), dt, n, st.seed)
    name = block["var"]
    mean, var = oracle(run.sc.params, x0[name], t_at)
    samples = e.marginal(name, t_at)
    n_se = float(block.get("n_se", 3))
    gauss = moment_test(samples, mean, var, n_se, band="chi2", name=f"{name}@{t_at}")
    robust = moment_test(samples, mean, var, n_se, band="kurtosis", name=f"{name}@{t_at}")
    # the Gaussian band understates the standard error of a sample variance
    # for heavy-tailed marginals; the kurtosis band is the actual 3 SE band
    band = block.get("band", "kurtosis")
    chosen = robust if band == "kurtosis" else gauss
    return {
        "ok": chosen.ok,
        "band": band,
        "target": {"mean": mean, "var": var},
        "report": chosen.as_dict(),
        "chi2_band": gauss.as_dict(),
        "N": n,
        "dt": dt,
        "alive_fraction": e.alive_fraction(),
    }


def _stage_alive(run: Run) -> dict:
    st, mc = run.st, run.sc.mc
    block = mc["alive"]
    dt, n = st.step(block), st.paths(block)
    x0 = _x0(run)
    t_at = float(block.get("t", mc["t_end"]))
    e = _simulate(run, run.sde, x0, float(mc["t_end"]), dt, n, st.seed)
    frac = e.alive_fraction(t_at)
    need = float(block.get("min_fraction", 1.0))
    return {"ok": frac >= need, "alive_fraction": frac, "min_fraction": need, "t": t_at, "dt": dt, "N": n, "exports": [x for x in (_export(run, e, "original"),) if x]}


# ---------------------------------------------------------------------------
# commands


def _verify_stages(run: Run):
    yield "verify", lambda: _stage_verify(run)
    if run.sc.flow:
        yield "flow", lambda: _stage_flow(run)


def _symbolic_stages(run: Run):
    sc = run.sc
    yield from _verify_stages(run)
    if sc.transformation:
        if sc.strongify:
            yield "strongify", lambda: _stage_strongify(run)
        yield "transform", lambda: _stage_transform(run)
    if sc.pushforwards:
        yield "pushforwards", lambda: _stage_extra_pushforwards(run)
    if sc.canonical and sc.transformation:
        yield "canonical", lambda: _stage_canonical(run)
    if sc.reduction:
        yield "reduce", lambda: _stage_reduce(run)
    if sc.integrability:
        yield "integrability", lambda: _stage_integrability(run)
    if sc.canonical and sc.transformation and "plan_r" in sc.canonical:
        yield "plan", lambda: _stage_plan(run)


def _pipeline_stages(run: Run):
    yield from _symbolic_stages(run)
    mc = run.sc.mc or {}
    if "ks" in mc and run.sc.transformation:
        yield "ks", lambda: _stage_ks(run)
    if "reconstruct" in mc and run.sc.canonical:
        yield "reconstruct", lambda: _stage_reconstruct(run)
    if "moments" in mc:
        yield "moments", lambda: _stage_moments(run)
    if "alive" in mc:
        yield "alive", lambda: _stage_alive(run)


def _reduce_stages(run: Run):
    sc = run.sc
    if not (sc.reduction or sc.canonical or sc.integrability):
        run.report["warnings"].append("scenario has no reduction, canonical or integrability block")
    if sc.canonical and sc.transformation:
        yield "canonical", lambda: _stage_canonical(run)
    if sc.reduction:
        yield "reduce", lambda: _stage_reduce(run)
    if sc.integrability:
        yield "integrability", lambda: _stage_integrability(run)
    if sc.canonical and sc.transformation and "plan_r" in sc.canonical:
        yield "plan", lambda: _stage_plan(run)


def _find_stages(run: Run):
    if not run.sc.find:
        raise ScenarioError(f"{run.sc.name}: no find block (basis spec)")
    yield "find", lambda: _stage_find(run)


def _stage_find(run: Run) -> dict:
    sc, st = run.sc, run.st
    f = sc.find
    basis = [sc.parse_in(b, sc.vars, "find basis") for b in f["basis"]]
    space = AnsatzSpace.full(basis, len(sc.vars), sc.m, bool(f.get("with_c", False)), bool(f.get("with_tau", False)))
    res = find_symmetries(run.sde, space, float(f.get("svd_tol", 1e-8)), seed=st.seed, trials=st.trials, verify_tol=st.tol)
    found = [[to_text(e) for e in v.entries()] for v in res.symmetries]
    details = {
        "dimension": res.dimension,
        "symmetries": found,
        "coefficients": res.coefficients,
        "singular_values": res.singular_values,
        "threshold": res.threshold,
        "n_points": res.n_points,
        "unknowns": space.d,
        "note": "completeness is relative to the declared basis",
    }
    ok = True
    if "expect_dimension" in f:
        ok = res.dimension == int(f["expect_dimension"])
    if f.get("expect") is not None and ok:
        if len(f["expect"]) != res.dimension:
            ok = False
        else:
            exact = []
            for want_d, v in zip(f["expect"], res.symmetries):
                want = [sc.parse_in(x, sc.vars, "expected symmetry") for x in _triad_texts(want_d, sc.m)]
                struct = all(a == b for a, b in zip(v.entries(), want))
                num = _compare(v.entries(), want, run.sde.sampler(), st)["ok"]
                exact.append({"structural": struct, "numeric": num})
                ok = ok and num
            details["matches"] = exact
    return {"ok": ok, **details}


def run_verify(sc: Scenario, st: Settings | None = None):
    return _execute("verify", sc, st or Settings(), _verify_stages)


def run_find(sc: Scenario, st: Settings | None = None):
    return _execute("find", sc, st or Settings(), _find_stages)


def run_reduce(sc: Scenario, st: Settings | None = None):
    return _execute("reduce", sc, st or Settings(), _reduce_stages)


def run_pipeline(sc: Scenario, st: Settings | None = None):
    return _execute("pipeline", sc, st or Settings(), _pipeline_stages)


def run_symbolic(sc: Scenario, st: Settings | None = None):
    """The pipeline without its Monte Carlo stages."""
    return _execute("symbolic", sc, st or Settings(), _symbolic_stages)


COMMANDS = {"verify": run_verify, "find": run_find, "reduce": run_reduce, "pipeline": run_pipeline}
