"""Domain sampling and randomized zero testing.

``equiv_zero`` is a probabilistic decision procedure: an expression is
declared identically zero when it vanishes (relative to the magnitude of its
own sub-terms) at every sampled admissible point.  It is not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr
from .numeric import evaluate_many, evaluate_with_scale

MAX_REJECTIONS = 10_000


class SamplerExhausted(RuntimeError):
    pass


def _guard_mask(guards, pts, n):
    ok = np.ones(n, dtype=bool)
    if not guards:
        return ok
    with np.errstate(all="ignore"):
        vals = evaluate_many(guards, pts, strict=False, shape=(n,))
    for v in vals:
        ok &= np.isfinite(v) & (v > 0)
    return ok


@dataclass(frozen=True)
class DomainSampler:
    """Uniform sampling on per-name open boxes, rejection-filtered by guards
    (each guard ``g`` means ``g > 0``).  Names in ``fixed`` are bound to
    constant values (model parameters)."""

    boxes: Mapping[str, tuple[float, float]]
    guards: tuple[Expr, ...] = ()
    fixed: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    max_rejections: int = MAX_REJECTIONS

    def with_seed(self, seed: int) -> "DomainSampler":
        return DomainSampler(self.boxes, self.guards, self.fixed, seed, self.max_rejections)

    def sample(self, n: int, stream: int = 0) -> dict[str, np.ndarray]:
        rng = np.random.default_rng([self.seed, stream])
        names = sorted(self.boxes)
        got: dict[str, list] = {k: [] for k in names}
        have = 0
        rejected = 0
        while have < n:
            batch = max(2 * (n - have), 64)
            pts = {k: rng.uniform(*self.boxes[k], size=batch) for k in names}
            full = {**{k: float(v) for k, v in self.fixed.items()}, **pts}
            ok = _guard_mask(self.guards, full, batch)
            take = np.flatnonzero(ok)[: n - have]
            rejected += int(batch - ok.sum())
            if rejected > self.max_rejections and have + len(take) < n:
                raise SamplerExhausted(
                    f"more than {self.max_rejections} rejections while sampling {n} points"
                )
            for k in names:
                got[k].append(pts[k][take])
            have += len(take)
        out = {k: np.concatenate(v) for k, v in got.items()}
        for k, v in self.fixed.items():
            if k not in out:
                out[k] = np.full(n, float(v))
        return out


@dataclass(frozen=True)
class ImageSampler:
    """Samples the image of another sampler's domain under a map
    ``{new_name: expr in old names}``, with optional guards in new names."""

    base: object
    mapping: Mapping[str, Expr]
    guards: tuple[Expr, ...] = ()
    keep: tuple[str, ...] = ()

    @property
    def seed(self):
        return self.base.seed

    @property
    def fixed(self):
        return getattr(self.base, "fixed", {})

    def with_seed(self, seed: int) -> "ImageSampler":
        return ImageSampler(self.base.with_seed(seed), self.mapping, self.guards, self.keep)

    def sample(self, n: int, stream: int = 0) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        have = 0
        attempt = 0
        while have < n:
            pts = self.base.sample(n, stream=stream + 7919 * attempt)
            names = list(self.mapping)
            vals = evaluate_many([self.mapping[k] for k in names], pts, shape=(n,))
            img = {k: np.asarray(v, dtype=float) for k, v in zip(names, vals)}
            for k in self.keep:
                img[k] = pts[k]
            for k, v in self.fixed.items():
                img.setdefault(k, np.full(n, float(v)))
            ok = _guard_mask(self.guards, img, n)
            take = np.flatnonzero(ok)[: n - have]
            for k, v in img.items():
                out.setdefault(k, []).append(v[take])
            have += len(take)
            attempt += 1
            if attempt > 50 and have < n:
                raise SamplerExhausted("image guards reject almost every pushed-forward point")
        return {k: np.concatenate(v) for k, v in out.items()}


@dataclass
class ZeroCheck:
    ok: bool
    max_abs: float
    max_rel: float
    witness: dict | None = None
    value: float | None = None

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_abs": self.max_abs,
            "max_rel": self.max_rel,
            "witness": "≡0" if self.ok else self.witness,
            "value": self.value,
        }


def zero_check(e: Expr, sampler, trials: int = 100, tol: float = 1e-9, stream: int = 0) -> ZeroCheck:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pts = sampler.sample(trials, stream=stream)
    v, scale = evaluate_with_scale(e, pts)
    v = np.broadcast_to(np.asarray(v, dtype=float), (trials,))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (trials,))
    a = np.abs(v)
    rel = a / (1.0 + scale)
    bad = a > tol * (1.0 + scale)
    if not bad.any():
        return ZeroCheck(True, float(a.max()), float(rel.max()))
    i = int(np.argmax(np.where(bad, rel, -1.0)))
    witness = {k: float(np.broadcast_to(val, (trials,))[i]) for k, val in pts.items()}
    return ZeroCheck(False, float(a.max()), float(rel.max()), witness, float(v[i]))


def equiv_zero(e: Expr, sampler, trials: int = 100, tol: float = 1e-9, stream: int = 0) -> bool:
    """True iff ``e`` vanishes at every sampled point, relative to sub-term scale."""
    return zero_check(e, sampler, trials, tol, stream).ok


def zero_check_all(exprs: Sequence[Expr], sampler, trials: int = 100, tol: float = 1e-9) -> ZeroCheck:
    """Combined check of many expressions; the first failure is reported."""
    worst_abs = 0.0
    worst_rel = 0.0
    for e in exprs:
        r = zero_check(e, sampler, trials, tol)
        if not r.ok:
            return r
        worst_abs = max(worst_abs, r.max_abs)
        worst_rel = max(worst_rel, r.max_rel)
    return ZeroCheck(True, worst_abs, worst_rel)
