"""Pathwise maps on ensembles: P_T (rotated noise plus random time change)
and execution of reconstruction plans."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..expr import is_const
from ..linalg import eye
from ..numeric import DomainError, compile_exprs
from ..reduction import ReconstructionPlan
from ..transform import StochasticTransformation
from .ensemble import PathEnsemble


def _eval_on_paths(exprs, names, columns, params: Mapping[str, float], shape):
    fn = compile_exprs(exprs, list(names) + list(params))
    vals = fn(*columns, *[float(v) for v in params.values()])
    return [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals]


def transform_paths(
    t: StochasticTransformation,
    e: PathEnsemble,
    *,
    dt_out: float | None = None,
    params: Mapping[str, float] | None = None,
) -> PathEnsemble:
    """P_T(X, W) = (Phi(H_eta(X)), H_eta(W~)) with dW~ = B(X) dW.

    The new clock t'_k accumulates eta by the trapezoidal rule; states are
    linearly interpolated onto a uniform t' grid up to the smallest final
    clock among surviving paths.  The time-changed noise is
    W'(t') = int sqrt(eta) dW~ read off at the same clock values."""
    if tuple(t.src_vars) != tuple(e.vars):
        raise ValueError(f"transformation acts on {t.src_vars}, ensemble holds {e.vars}")
    if t.m != e.m:
        raise ValueError("noise dimension mismatch")
    params = dict(e.meta.get("params", {})) if params is None else dict(params)
    P, K = e.n_paths, e.n_steps
    m = e.m
    left = [e.states[:, :K, i] for i in range(e.n)]
    full = [e.states[:, :, i] for i in range(e.n)]
    valid = np.arange(K + 1)[None, :] <= e.exit_step[:, None]

    if t.b == eye(m):
        dwt = e.dw
    else:
        bv = _eval_on_paths([x for row in t.b for x in row], e.vars, left, params, (P, K))
        dwt = np.zeros_like(e.dw)
        for a in range(m):
            for b in range(m):
                dwt[:, :, a] += bv[a * m + b] * e.dw[:, :, b]

    xp = np.stack(_eval_on_paths(list(t.phi), e.vars, full, params, (P, K + 1)), axis=2)
    bad = valid & ~np.all(np.isfinite(xp), axis=2)
    if bad.any():
        raise DomainError("Phi is not finite on an in-domain path state")
    meta = {**e.meta, "transformed_by": "P_T", "params": params}

    if is_const(t.eta, 1):
        return PathEnsemble(tuple(t.dst_vars), e.times, xp, dwt, e.exit_step.copy(), e.seed, meta)

    eta = _eval_on_paths([t.eta], e.vars, full, params, (P, K + 1))[0]
    if np.any(valid & ~(eta > 0)):
        raise DomainError("eta <= 0 (or non-finite) on an in-domain path state")
    eta = np.where(valid, eta, 0.0)
    live_step = np.arange(K)[None, :] < e.exit_step[:, None]
    inc = np.where(live_step, 0.5 * (eta[:, :-1] + eta[:, 1:]) * e.dt, 0.0)
    clock = np.concatenate([np.zeros((P, 1)), np.cumsum(inc, axis=1)], axis=1)
    dwn = np.where(live_step[:, :, None], np.sqrt(eta[:, :-1])[:, :, None] * dwt, 0.0)
    wcum = np.concatenate([np.zeros((P, 1, m)), np.cumsum(dwn, axis=1)], axis=1)

    alive = e.alive
    ends = clock[:, -1]
    horizon = float(ends[alive].min()) if alive.any() else float(ends.min())
    step = float(dt_out or e.dt)
    k_out = int(np.floor(horizon / step + 1e-9))
    if k_out < 1:
        raise ValueError(f"usable t' horizon {horizon:.3g} is shorter than one output step")
    grid = np.arange(k_out + 1) * step
    n_out = len(t.dst_vars)
    states = np.empty((P, k_out + 1, n_out))
    w_out = np.empty((P, k_out + 1, m))
    exit_out = np.full(P, k_out, dtype=np.int64)
    for p in range(P):
        hi = int(e.exit_step[p]) + 1
        c = clock[p, :hi]
        for i in range(n_out):
            states[p, :, i] = np.interp(grid, c, xp[p, :hi, i])
        for a in range(m):
            w_out[p, :, a] = np.interp(grid, c, wcum[p, :hi, a])
        if not alive[p]:
            exit_out[p] = min(k_out, int(np.floor(c[-1] / step + 1e-9)))
    meta.update(
        {
            "clock": "trapezoidal",
            "t_prime_horizon": horizon,
            "clock_end_min": float(ends.min()),
            "clock_end_max": float(ends.max()),
        }
    )
    out = PathEnsemble(tuple(t.dst_vars), grid, states, np.diff(w_out, axis=1), exit_out, e.seed, meta)
    out.meta["clock_end"] = ends
    return out


def reconstruct(
    plan: ReconstructionPlan,
    reduced: PathEnsemble,
    x0: Mapping[str, float],
    *,
    params: Mapping[str, float] | None = None,
) -> PathEnsemble:
    """Left-point (Ito) quadratures of the plan integrands along the reduced
    paths and their stored noise, then the assembling map if the plan has one."""
    if not plan.steps and plan.assemble is None:
        return reduced
    if reduced.m != plan.m:
        raise ValueError(f"plan expects {plan.m} noise channels, ensemble has {reduced.m}")
    params = dict(plan.params if params is None else params)
    P, K = reduced.n_paths, reduced.n_steps
    cols: dict[str, np.ndarray] = {v: reduced.column(v) for v in plan.reduced_vars}
    live = np.arange(K)[None, :] < reduced.exit_step[:, None]
    dt = reduced.dt
    for s in plan.steps:
        names = list(cols)
        left = [c[:, :K] for c in cols.values()]
        vals = _eval_on_paths([s.drift, *s.noise], names, left, params, (P, K))
        inc = vals[0] * dt
        for a in range(plan.m):
            inc = inc + vals[1 + a] * reduced.dw[:, :, a]
        if np.any(live & ~np.isfinite(inc)):
            raise DomainError(f"integrand for {s.coord} is not finite along an in-domain path")
        inc = np.where(live, inc, 0.0)
        cols[s.coord] = float(x0[s.coord]) + np.concatenate([np.zeros((P, 1)), np.cumsum(inc, axis=1)], axis=1)
    coords = [c for c in plan.coords if c in cols]
    if plan.assemble is None:
        names, states = tuple(coords), np.stack([cols[c] for c in coords], axis=2)
    else:
        names = tuple(plan.assemble)
        vals = _eval_on_paths([plan.assemble[k] for k in names], coords, [cols[c] for c in coords], params, (P, K + 1))
        states = np.stack(vals, axis=2)
    meta = {**reduced.meta, "reconstructed": [s.coord for s in plan.steps], "plan_kind": plan.kind}
    return PathEnsemble(names, reduced.times, states, reduced.dw, reduced.exit_step.copy(), reduced.seed, meta)
