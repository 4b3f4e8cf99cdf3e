"""Path ensembles and the Euler-Maruyama engine."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..numeric import DomainError, compile_exprs, evaluate_many
from ..sde import SdeModel

SEED_MASK = (1 << 64) - 1


@dataclass
class PathEnsemble:
    """``states`` is (paths, steps + 1, n), ``dw`` is (paths, steps, m).

    ``exit_step[p]`` is the index of the last in-domain state of path p
    (``steps`` for paths that never left); states after it are frozen."""

    vars: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray
    dw: np.ndarray
    exit_step: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n(self) -> int:
        return self.states.shape[2]

    @property
    def m(self) -> int:
        return self.dw.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def alive(self) -> np.ndarray:
        return self.exit_step >= self.n_steps

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n_steps or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)) + 0.5 * self.dt:
            raise ValueError(f"time {t} is not on the ensemble grid [0, {self.times[-1]}]")
        return k

    def alive_at(self, k: int) -> np.ndarray:
        return self.exit_step >= k

    def alive_fraction(self, t: float | None = None) -> float:
        k = self.n_steps if t is None else self.index_of(t)
        return float(np.mean(self.alive_at(k)))

    def column(self, name: str) -> np.ndarray:
        return self.states[:, :, self.vars.index(name)]

    def marginal(self, name: str, t: float) -> np.ndarray:
        """Samples of ``name`` at time t over the paths still in the domain."""
        k = self.index_of(t)
        return self.column(name)[self.alive_at(k), k]


def path_normals(seed: int, path: int, n_steps: int, m: int) -> np.ndarray:
    """Standard normals for one path from a Philox stream keyed by (seed, path)."""
    bg = np.random.Philox(key=np.array([seed & SEED_MASK, path], dtype=np.uint64))
    return np.random.Generator(bg).standard_normal((n_steps, m))


class Coefficients:
    """Compiled drift, diffusion and guards of an SDE with bound parameters."""

    def __init__(self, sde: SdeModel, guards=None):
        self.sde = sde
        self.names = list(sde.vars) + list(sde.params)
        self.param_values = [float(v) for v in sde.params.values()]
        guards = tuple(sde.domain.guards if guards is None else guards)
        self.n_guards = len(guards)
        exprs = list(sde.mu) + [x for row in sde.sigma for x in row] + list(guards)
        self.fn = compile_exprs(exprs, self.names)

    def __call__(self, x: np.ndarray):
        """x: (P, n) -> mu (P, n), sigma (P, n, m), guard_ok (P,)"""
        p = x.shape[0]
        n, m = self.sde.n, self.sde.m
        vals = self.fn(*[x[:, i] for i in range(n)], *self.param_values)
        vals = [np.broadcast_to(np.asarray(v, dtype=float), (p,)) for v in vals]
        mu = np.stack(vals[:n], axis=1) if n else np.zeros((p, 0))
        sig = np.stack(vals[n : n + n * m], axis=1).reshape(p, n, m)
        ok = np.ones(p, dtype=bool)
        for g in vals[n + n * m :]:
            ok &= g > 0
        return mu, sig, ok

    def in_domain(self, x: np.ndarray) -> np.ndarray:
        mu, sig, ok = self(x)
        return ok & np.all(np.isfinite(x), axis=1)


def _x0_vector(sde: SdeModel, x0) -> np.ndarray:
    if isinstance(x0, Mapping):
        missing = [v for v in sde.vars if v not in x0]
        if missing:
            raise ValueError(f"x0 misses {missing}")
        return np.array([float(x0[v]) for v in sde.vars])
    x = np.asarray(x0, dtype=float)
    if x.shape != (sde.n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({sde.n},)")
    return x


def _steps(t_end: float, dt: float) -> int:
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    k = int(round(t_end / dt))
    if abs(k * dt - t_end) > 1e-9 * t_end:
        raise ValueError(f"t_end {t_end} is not a multiple of dt {dt}")
    return k


def simulate(
    sde: SdeModel,
    x0,
    t_end: float,
    dt: float,
    n_paths: int,
    seed: int,
    *,
    n_workers: int = 1,
    guards: Sequence | None = None,
) -> PathEnsemble:
    """Euler-Maruyama X_{k+1} = X_k + mu dt + sigma dW_k.

    Paths whose next state violates a guard or makes a coefficient
    non-finite are frozen at their last admissible state.  Noise for path p
    depends only on (seed, p), so results do not depend on ``n_workers``."""
    n_steps = _steps(t_end, dt)
    x = _x0_vector(sde, x0)
    point = {**dict(zip(sde.vars, x)), **{k: float(v) for k, v in sde.params.items()}}
    evaluate_many(sde.coefficients(), point)  # raises DomainError at a singular x0
    coeffs = Coefficients(sde, guards)
    if not coeffs.in_domain(x[None, :])[0]:
        raise DomainError(f"x0 = {dict(zip(sde.vars, x))} is outside the domain")
    m = sde.m
    states = np.empty((n_paths, n_steps + 1, sde.n))
    dw = np.empty((n_paths, n_steps, m))
    exit_step = np.full(n_paths, n_steps, dtype=np.int64)
    sq = np.sqrt(dt)

    def run(lo: int, hi: int):
        for p in range(lo, hi):
            dw[p] = path_normals(seed, p, n_steps, m) * sq
        cur = np.repeat(x[None, :], hi - lo, axis=0)
        states[lo:hi, 0] = cur
        live = np.ones(hi - lo, dtype=bool)
        for k in range(n_steps):
            mu, sig, _ = coeffs(cur)
            nxt = cur + mu * dt + np.einsum("pij,pj->pi", sig, dw[lo:hi, k])
            ok = coeffs.in_domain(nxt) & np.all(np.isfinite(mu), axis=1) & np.all(np.isfinite(sig), axis=(1, 2))
            newly = live & ~ok
            if newly.any():
                exit_step[lo:hi][newly] = k
                live &= ok
            nxt = np.where(live[:, None], nxt, cur)
            states[lo:hi, k + 1] = nxt
            cur = nxt

    chunks = max(1, int(n_workers))
    bounds = np.linspace(0, n_paths, chunks + 1).astype(int)
    if chunks == 1:
        run(0, n_paths)
    else:
        with ThreadPoolExecutor(chunks) as pool:
            list(pool.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
    times = np.arange(n_steps + 1) * dt
    meta = {
        "sde": sde.name,
        "x0": dict(zip(sde.vars, x.tolist())),
        "params": {k: float(v) for k, v in sde.params.items()},
        "scheme": "euler-maruyama",
        "rng": "philox(seed, path)",
    }
    return PathEnsemble(tuple(sde.vars), times, states, dw, exit_step, int(seed), meta)
