"""Scenario files: one JSON document per example, expressions as grammar strings.

A scenario is loaded into plain dataclasses of strings (so load -> dump ->
load is the identity) and every expression is parsed and name-checked at load
time.  ``Scenario.build()`` then produces the symbolic objects, with all
parameters substituted as exact decimals.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .expr import ONE, Expr, bind, exact_value
from .parse import ParseError, parse, parse_guard
from .sde import Domain, SdeModel
from .transform import (
    InfinitesimalTransformation,
    StochasticTransformation,
    rotation_from_angle,
    rotation_from_cosine,
)

FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """Malformed scenario (maps to CLI exit code 2)."""


@dataclass
class TriadSpec:
    name: str
    y: list[str]
    c: list[list[str]] | None = None
    tau: str = "0"
    expect: str = "pass"

    @classmethod
    def from_dict(cls, d):
        return cls(str(d.get("name", "")), list(d["y"]), d.get("c"), str(d.get("tau", "0")), str(d.get("expect", "pass")))


@dataclass
class TransformSpec:
    dst_vars: list[str]
    phi: list[str]
    phi_inv: dict[str, str] | None = None
    b: list[list[str]] | None = None
    angle: str | None = None
    cosine: str | None = None
    branch: int = 1
    eta: str = "1"
    guards: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d):
        return cls(
            list(d["dst_vars"]),
            list(d["phi"]),
            d.get("phi_inv"),
            d.get("b"),
            d.get("angle"),
            d.get("cosine"),
            int(d.get("branch", 1)),
            str(d.get("eta", "1")),
            list(d.get("guards", [])),
        )


_OPTIONAL_BLOCKS = ("expected", "canonical", "reduction", "find", "flow", "pushforwards", "mc", "integrability")


@dataclass
class Scenario:
    name: str
    vars: list[str]
    mu: list[str]
    sigma: list[list[str]]
    params: dict[str, float] = field(default_factory=dict)
    boxes: dict[str, list[float]] = field(default_factory=dict)
    guards: list[str] = field(default_factory=list)
    description: str = ""
    symmetries: list[TriadSpec] = field(default_factory=list)
    transformation: TransformSpec | None = None
    strongify: bool = False
    assumptions: list[str] = field(default_factory=list)
    expected: dict | None = None
    canonical: dict | None = None
    reduction: dict | None = None
    find: dict | None = None
    flow: dict | None = None
    pushforwards: list | None = None
    mc: dict | None = None
    integrability: dict | None = None

    # -- serialization ---------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        version = d.get("version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ScenarioError(f"unsupported scenario version {version}")
        try:
            sde = d["sde"]
            dom = sde.get("domain", {})
            sc = cls(
                name=str(d["name"]),
                description=str(d.get("description", "")),
                vars=list(sde["vars"]),
                mu=[str(x) for x in sde["mu"]],
                sigma=[[str(x) for x in row] for row in sde["sigma"]],
                params={k: float(v) for k, v in sde.get("params", {}).items()},
                boxes={k: [float(a), float(b)] for k, (a, b) in dom.get("boxes", {}).items()},
                guards=list(dom.get("guards", [])),
                symmetries=[TriadSpec.from_dict(s) for s in d.get("symmetries", [])],
                transformation=TransformSpec.from_dict(d["transformation"]) if d.get("transformation") else None,
                strongify=bool(d.get("strongify", False)),
                assumptions=list(d.get("assumptions", [])),
                **{k: d.get(k) for k in _OPTIONAL_BLOCKS},
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed scenario: {exc!r}") from None
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "version": FORMAT_VERSION,
            "name": self.name,
            "description": self.description,
            "sde": {
                "vars": self.vars,
                "params": self.params,
                "mu": self.mu,
                "sigma": self.sigma,
                "domain": {"boxes": self.boxes, "guards": self.guards},
            },
            "symmetries": [asdict(s) for s in self.symmetries],
            "transformation": asdict(self.transformation) if self.transformation else None,
            "strongify": self.strongify,
            "assumptions": self.assumptions,
        }
        for k in _OPTIONAL_BLOCKS:
            d[k] = getattr(self, k)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    # -- parsing helpers ---------------------------------------------------
    def parse_in(self, text: str, names, what: str) -> Expr:
        """Parse ``text`` allowing the given variable names plus parameters;
        parameters are bound to their exact values."""
        try:
            e = parse(str(text), list(self.params))
        except ParseError as exc:
            raise ScenarioError(f"{self.name}: {what}: {exc}") from None
        extra = e.free - set(names) - set(self.params)
        if extra:
            raise ScenarioError(f"{self.name}: {what}: unknown names {sorted(extra)} in {text!r}")
        return bind(e, self.params)

    def parse_guard_in(self, text: str, names, what: str) -> Expr:
        try:
            g = parse_guard(str(text), list(self.params))
        except ParseError as exc:
            raise ScenarioError(f"{self.name}: {what}: {exc}") from None
        extra = g.free - set(names) - set(self.params)
        if extra:
            raise ScenarioError(f"{self.name}: {what}: unknown names {sorted(extra)}")
        return bind(g, self.params)

    def validate(self) -> None:
        n = len(self.vars)
        if len(set(self.vars)) != n:
            raise ScenarioError("duplicate state variable names")
        if set(self.vars) & set(self.params):
            raise ScenarioError("a name is both a variable and a parameter")
        if len(self.mu) != n or len(self.sigma) != n:
            raise ScenarioError(f"drift/diffusion shapes do not match {n} variables")
        if len({len(r) for r in self.sigma}) != 1:
            raise ScenarioError("diffusion rows have unequal lengths")
        self.build()

    # -- symbolic objects ----------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.sigma[0])

    def model(self) -> SdeModel:
        v = self.vars
        mu = tuple(self.parse_in(x, v, "drift") for x in self.mu)
        sigma = tuple(tuple(self.parse_in(x, v, "diffusion") for x in row) for row in self.sigma)
        guards = tuple(self.parse_guard_in(g, v, "guard") for g in self.guards)
        for k in self.boxes:
            if k not in v:
                raise ScenarioError(f"box for unknown variable {k!r}")
        missing = [x for x in v if x not in self.boxes]
        if missing:
            raise ScenarioError(f"no sampling box for {missing}")
        boxes = {k: (a, b) for k, (a, b) in self.boxes.items()}
        for k, (a, b) in boxes.items():
            if not a < b:
                raise ScenarioError(f"empty box for {k}")
        return SdeModel(tuple(v), mu, sigma, {}, Domain(boxes, guards), self.name)

    def triad(self, spec: TriadSpec, vars=None) -> InfinitesimalTransformation:
        vars = tuple(vars or self.vars)
        m = self.m
        if len(spec.y) != len(vars):
            raise ScenarioError(f"symmetry {spec.name}: Y has {len(spec.y)} components, expected {len(vars)}")
        y = tuple(self.parse_in(x, vars, f"symmetry {spec.name}") for x in spec.y)
        if spec.c is None:
            c = tuple(tuple(exact_value(0) for _ in range(m)) for _ in range(m))
        else:
            if len(spec.c) != m or any(len(r) != m for r in spec.c):
                raise ScenarioError(f"symmetry {spec.name}: C must be {m}x{m}")
            c = tuple(tuple(self.parse_in(x, vars, f"symmetry {spec.name}") for x in row) for row in spec.c)
        tau = self.parse_in(spec.tau, vars, f"symmetry {spec.name}")
        return InfinitesimalTransformation(vars, y, c, tau, spec.name)

    def triads(self) -> list[InfinitesimalTransformation]:
        return [self.triad(s) for s in self.symmetries]

    def symmetry_named(self, name: str) -> InfinitesimalTransformation:
        neg = name.startswith("-")
        key = name[1:] if neg else name
        for s in self.symmetries:
            if s.name == key:
                v = self.triad(s)
                return v.scaled(-1) if neg else v
        raise ScenarioError(f"no symmetry named {key!r}")

    def b_matrix(self, t: TransformSpec, vars) -> tuple:
        m = self.m
        given = [x is not None for x in (t.b, t.angle, t.cosine)]
        if sum(given) > 1:
            raise ScenarioError("give B as a matrix, an angle or a cosine, not several")
        if t.angle is not None:
            if m != 2:
                raise ScenarioError("angle form of B needs m = 2")
            return rotation_from_angle(self.parse_in(t.angle, vars, "B angle"))
        if t.cosine is not None:
            if m != 2:
                raise ScenarioError("cosine form of B needs m = 2")
            return rotation_from_cosine(self.parse_in(t.cosine, vars, "B cosine"), t.branch)
        if t.b is None:
            return tuple(tuple(ONE if i == j else exact_value(0) for j in range(m)) for i in range(m))
        if len(t.b) != m or any(len(r) != m for r in t.b):
            raise ScenarioError(f"B must be {m}x{m}")
        return tuple(tuple(self.parse_in(x, vars, "B") for x in row) for row in t.b)

    def transform(self, t: TransformSpec | None = None) -> StochasticTransformation:
        t = t or self.transformation
        if t is None:
            raise ScenarioError(f"{self.name}: no transformation block")
        v = self.vars
        if len(t.phi) != len(v) or len(t.dst_vars) != len(v):
            raise ScenarioError("Phi must have one component (and one image name) per state variable")
        phi = tuple(self.parse_in(x, v, "Phi") for x in t.phi)
        inv = None
        if t.phi_inv is not None:
            if set(t.phi_inv) != set(v):
                raise ScenarioError("phi_inv must give every original variable")
            inv = {k: self.parse_in(x, t.dst_vars, "phi_inv") for k, x in t.phi_inv.items()}
        b = self.b_matrix(t, v)
        eta = self.parse_in(t.eta, v, "eta")
        guards = tuple(self.parse_guard_in(g, v, "transformation guard") for g in t.guards)
        return StochasticTransformation(tuple(v), tuple(t.dst_vars), phi, b, eta, inv, guards)

    def build(self) -> None:
        """Parse everything once (raises ScenarioError on any problem)."""
        self.model()
        self.triads()
        if self.transformation:
            self.transform()
        for p in self.pushforwards or []:
            self.transform(TransformSpec.from_dict(p["transformation"]))
        if self.find:
            for b in self.find.get("basis", []):
                self.parse_in(b, self.vars, "find basis")
        if self.reduction:
            vars_red = self.reduction_source_vars()
            for x in self.reduction.get("psi", []):
                self.parse_in(x, vars_red, "Psi")
            for k, x in (self.reduction.get("section") or {}).items():
                self.parse_in(x, self.reduction["reduced_vars"], "section")

    def reduction_source_vars(self):
        if self.reduction and self.reduction.get("on") == "transformed":
            if not self.transformation:
                raise ScenarioError("reduction on the transformed SDE needs a transformation")
            return self.transformation.dst_vars
        return self.vars


def load(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def loads(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return Scenario.from_dict(d)


def bundled_names() -> list[str]:
    root = resources.files("sdesym") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    root = resources.files("sdesym") / "scenarios"
    p = root / f"{name}.json"
    if not p.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}; have {bundled_names()}")
    return Path(str(p))


def load_bundled(name: str) -> Scenario:
    return load(bundled_path(name))
