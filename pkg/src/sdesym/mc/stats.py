"""Two-sample Kolmogorov-Smirnov and moment tests with structured reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov

MIN_SAMPLES = 100


@dataclass
class StatReport:
    tests: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(t["verdict"] == "pass" for t in self.tests)

    def extend(self, other: "StatReport") -> "StatReport":
        self.tests.extend(other.tests)
        return self

    def as_dict(self) -> dict:
        return {"ok": self.ok, "tests": self.tests, "meta": self.meta}

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), default=_jsonable, **kw)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_pvalue(d: float, n1: int, n2: int) -> float:
    """Asymptotic two-sample p-value with the Stephens small-sample correction."""
    en = np.sqrt(n1 * n2 / (n1 + n2))
    return float(kolmogorov((en + 0.12 + 0.11 / en) * d))


def ks_test(a, b, level: float = 0.01, *, name: str = "ks", meta: dict | None = None) -> StatReport:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < MIN_SAMPLES or b.size < MIN_SAMPLES:
        raise ValueError(f"KS test needs at least {MIN_SAMPLES} samples per side (got {a.size}, {b.size})")
    d = ks_statistic(a, b)
    p = ks_pvalue(d, a.size, b.size)
    test = {
        "test": "ks",
        "name": name,
        "statistic": d,
        "p_value": p,
        "threshold": level,
        "n": [int(a.size), int(b.size)],
        "verdict": "pass" if p > level else "fail",
    }
    return StatReport([test], dict(meta or {}))


def moment_test(
    samples,
    target_mean: float,
    target_var: float,
    n_se: float = 3.0,
    *,
    band: str = "chi2",
    name: str = "moments",
    meta: dict | None = None,
) -> StatReport:
    """|mean - target| <= n_se * SE and s^2 / target_var inside
    1 +- n_se * w, with w = sqrt(2 / (n - 1)) for the Gaussian (chi^2) band
    or sqrt((kurtosis - 1) / n) for ``band="kurtosis"``."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < MIN_SAMPLES:
        raise ValueError(f"moment test needs at least {MIN_SAMPLES} samples (got {n})")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    se = np.sqrt(var / n)
    slack = 1e-12 * (1.0 + abs(target_mean))
    mean_ok = abs(mean - target_mean) <= n_se * se + slack
    if band == "chi2":
        w = np.sqrt(2.0 / (n - 1))
    elif band == "kurtosis":
        c = x - mean
        m2 = float(np.mean(c**2))
        kurt = float(np.mean(c**4)) / m2**2 if m2 > 0 else 3.0
        w = np.sqrt(max(kurt - 1.0, 0.0) / n)
    else:
        raise ValueError(f"unknown band {band!r}")
    if target_var == 0:
        var_ok = var <= 1e-24
        ratio = None
    else:
        ratio = var / target_var
        var_ok = abs(ratio - 1.0) <= n_se * w
    tests = [
        {
            "test": "mean",
            "name": name,
            "statistic": mean,
            "target": target_mean,
            "threshold": n_se * se,
            "deviation": abs(mean - target_mean),
            "verdict": "pass" if mean_ok else "fail",
        },
        {
            "test": "variance",
            "name": name,
            "statistic": var,
            "target": target_var,
            "ratio": ratio,
            "band": band,
            "threshold": n_se * w,
            "verdict": "pass" if var_ok else "fail",
        },
    ]
    return StatReport(tests, {"n": n, **(meta or {})})


def bonferroni(level: float, k: int) -> float:
    if k < 1:
        raise ValueError("need at least one comparison")
    return level / k
