import pytest

from sdesym.expr import Const
from sdesym.parse import parse
from sdesym.pipeline import run_reduce, run_symbolic
from sdesym.reduction import (
    PlanStep,
    ReconstructionPlan,
    ReductionError,
    ReductionMapSpec,
    TriangularityError,
    build_reconstruction_plan,
    check_canonical_form,
    check_solvable,
    is_integrable,
    reduce_sde,
    reduce_symmetry,
    verify_reduction_map,
)
from sdesym.sampling import equiv_zero
from sdesym.sde import SdeModel
from sdesym.transform import InfinitesimalTransformation

P = lambda *xs: tuple(parse(x) for x in xs)  # noqa: E731


def stage(report, name):
    return next(s for s in report["stages"] if s["stage"] == name)


def brownian(n=2, box=(-1.0, 1.0)):
    vs = ["x", "z", "w"][:n]
    sigma = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    return SdeModel.from_strings(vs, ["0"] * n, sigma, boxes={v: box for v in vs})


def strong(vars, *y, m=2):
    return InfinitesimalTransformation.strong(vars, P(*y), m)


class TestMap:
    def test_singular_level_function(self, scenario):
        sc = scenario("singular")
        sde, (v,) = sc.model(), sc.triads()
        spec = ReductionMapSpec(("q",), P("x^2-z^2"))
        rep = verify_reduction_map(spec, sde.vars, [v.y], sde.sampler())
        assert rep.ok
        assert rep.checks["level sets connected"]["ok"] is None

    def test_transversal_failure(self, scenario):
        sc = scenario("singular")
        sde, (v,) = sc.model(), sc.triads()
        rep = verify_reduction_map(ReductionMapSpec(("q",), P("x")), sde.vars, [v.y], sde.sampler())
        assert not rep.ok and rep.failed == "grad(Psi).Y1 = 0"
        assert set(rep.witness) == {"x", "z"}

    def test_dimension_mismatch(self, scenario):
        sc = scenario("singular")
        sde, (v,) = sc.model(), sc.triads()
        rep = verify_reduction_map(ReductionMapSpec(("q", "p"), P("x^2-z^2", "x")), sde.vars, [v.y], sde.sampler())
        assert rep.failed == "dimension"

    def test_rank_failure(self):
        sde = brownian()
        # a constant Psi has rank-zero gradient everywhere
        rep = verify_reduction_map(ReductionMapSpec(("q",), P("0*x+1")), sde.vars, [P("0", "1")], sde.sampler())
        assert not rep.ok and rep.failed.startswith("rank grad(Psi)")

    def test_name_count(self):
        with pytest.raises(ValueError):
            ReductionMapSpec(("a", "b"), P("x"))


class TestReduceSde:
    def test_quasi_strong_noise_term_rejected(self, scenario):
        # Psi is invariant, but the rotated noise still moves it
        sc = scenario("singular")
        sde, (v,) = sc.model(), sc.triads()
        with pytest.raises(ReductionError, match="sigma.C"):
            reduce_sde(sde, ReductionMapSpec(("q",), P("x^2-z^2")), [v], proposed=(P("0"), (P("0", "0"),)))

    def test_kp_proposed(self, scenario):
        sc = scenario("kp2d")
        sde = sc.model()
        v2 = sc.symmetry_named("V2")
        spec = ReductionMapSpec(("xr",), P("x"), {"x": parse("xr"), "z": Const(1)})
        pair = reduce_sde(sde, spec, [v2])
        assert pair.reduced.vars == ("xr",)
        # lam = 0.3, nu = 0.7
        assert equiv_zero(pair.reduced.mu[0] - parse("3/10*xr+7/10"), pair.reduced.sampler())

    def test_kp_inherit_fails_on_bracket(self, scenario):
        sc = scenario("kp2d")
        sde = sc.model()
        v1, v2 = sc.symmetry_named("V1"), sc.symmetry_named("V2")
        spec = ReductionMapSpec(("xr",), P("x"), {"x": parse("xr"), "z": Const(1)})
        pair = reduce_sde(sde, spec, [v2])
        with pytest.raises(ReductionError, match="span"):
            reduce_symmetry(pair, v1, [v2], spec)

    def test_needs_section_or_proposal(self):
        sde = brownian()
        with pytest.raises(ReductionError, match="re-expression"):
            reduce_sde(sde, ReductionMapSpec(("q",), P("z")), [strong(sde.vars, "1", "0")])

    def test_original_names_must_not_survive(self):
        sde = brownian()
        with pytest.raises(ReductionError, match="survive"):
            reduce_sde(sde, ReductionMapSpec(("q",), P("z")), [strong(sde.vars, "1", "0")], proposed=(P("x"), (P("0", "1"),)))

    def test_wrong_proposal(self):
        sde = brownian()
        with pytest.raises(ReductionError, match="sigma' o Psi"):
            reduce_sde(sde, ReductionMapSpec(("q",), P("z")), [strong(sde.vars, "1", "0")], proposed=(P("0"), (P("1", "0"),)))

    def test_symmetry_violation_detected(self):
        sde = SdeModel.from_strings(["x", "z"], ["x", "0"], [["1", "0"], ["0", "1"]], boxes={"x": (-1, 1), "z": (-1, 1)})
        with pytest.raises(ReductionError, match="L\\(Psi\\)"):
            reduce_sde(sde, ReductionMapSpec(("q",), P("x+z")), [strong(sde.vars, "1", "-1")], proposed=(P("q"), (P("1", "1"),)))

    def test_abelian_inherit(self):
        sde = brownian()
        spec = ReductionMapSpec(("q",), P("z"), {"x": Const(0), "z": parse("q")})
        dx, dz = strong(sde.vars, "1", "0"), strong(sde.vars, "0", "1")
        pair = reduce_sde(sde, spec, [dx])
        assert pair.reduced.mu == (Const(0),) and pair.reduced.sigma == ((Const(0), Const(1)),)
        w = reduce_symmetry(pair, dz, [dx], spec)
        assert w.vars == ("q",) and w.y == (Const(1),)

    def test_c_tilde_variant(self):
        sde = brownian()
        spec = ReductionMapSpec(("q",), P("z"), {"x": Const(0), "z": parse("q")})
        dx, dz = strong(sde.vars, "1", "0"), strong(sde.vars, "0", "1")
        pair = reduce_sde(sde, spec, [dx])
        # C~ must be killed by grad(Psi).sigma = (0, 1); this one is not
        bad = ((Const(0), Const(0)), (Const(0), Const(1)))
        with pytest.raises(ReductionError, match="C~"):
            reduce_symmetry(pair, dz, [dx], spec, c_tilde=bad)
        ok = ((Const(0), Const(1)), (Const(0), Const(0)))
        w = reduce_symmetry(pair, dz, [dx], spec, c_tilde=ok)
        assert w.y == (Const(1),)

    def test_central_force_expected(self, scenario):
        code, report = run_reduce(scenario("mechanics-central-force"))
        assert code == 0
        red = stage(report, "reduce")
        assert red["status"] == "pass" and red["expected_match"]["ok"]

    @pytest.mark.parametrize("name", ["kp2d", "mechanics-oscillator", "mechanics-central-force"])
    def test_scenarios(self, scenario, name):
        assert run_symbolic(scenario(name))[0] == 0


class TestCanonical:
    def sampler(self):
        return brownian().sampler()

    @pytest.mark.parametrize(
        "ys, ok, blocks",
        [
            ([("1", "0"), ("0", "1")], True, (2,)),
            ([("1", "0"), ("x", "1")], True, (1, 1)),
            ([("1", "0")], True, (1,)),
            ([("1", "z")], False, ()),
            ([("x", "0")], False, ()),
            ([("1", "1"), ("0", "1")], False, ()),
            ([("1", "0"), ("0", "1"), ("1", "1")], False, ()),
            ([], True, ()),
        ],
    )
    def test_cases(self, ys, ok, blocks):
        v = check_canonical_form([P(*y) for y in ys], self.sampler())
        assert v.ok == ok
        if ok:
            assert v.blocks == blocks
        else:
            assert v.reason

    @pytest.mark.parametrize("name", ["kp2d", "sabr"])
    def test_scenario_blocks(self, scenario, name):
        can = stage(run_symbolic(scenario(name))[1], "canonical")
        assert can["canonical"] == {"canonical": True, "blocks": [1, 1], "reason": ""}


class TestSolvable:
    def test_abelian(self):
        sde = brownian()
        rep = check_solvable([P("1", "0"), P("0", "1")], sde.vars, sde.sampler())
        assert rep.dims == (2, 0) and rep.verdict == "abelian" and rep.regular

    def test_euclidean_plane(self):
        sde = brownian()
        rep = check_solvable([P("1", "0"), P("0", "1"), P("-z", "x")], sde.vars, sde.sampler())
        assert rep.dims == (3, 2, 0) and rep.solvable
        assert not rep.regular and rep.regular_witness

    def test_sl2_not_solvable(self):
        sde = SdeModel.from_strings(["x"], ["0"], [["1"]], boxes={"x": (0.5, 2)})
        rep = check_solvable([P("1"), P("x"), P("x^2")], sde.vars, sde.sampler())
        assert rep.dims == (3, 3) and rep.verdict == "non-solvable"

    def test_duplicates_collapse(self):
        sde = brownian()
        rep = check_solvable([P("1", "0"), P("2", "0")], sde.vars, sde.sampler())
        assert rep.dims == (1, 0)

    @pytest.mark.parametrize("name", ["kp2d", "sabr"])
    def test_scenario_series(self, scenario, name):
        sc = scenario(name)
        can = stage(run_symbolic(sc)[1], "canonical")
        assert can["solvability"]["derived_series"] == [2, 1, 0]


class TestPlan:
    def chain(self, mu, sigma):
        vs = ["a", "b", "c"]
        return SdeModel.from_strings(vs, mu, sigma, boxes={v: (0.5, 1.5) for v in vs})

    def test_progressive(self):
        sde = self.chain(["b", "c", "-c"], [["1", "0"], ["c", "0"], ["0", "1"]])
        plan = build_reconstruction_plan(sde, 2)
        assert [s.coord for s in plan.steps] == ["b", "a"]
        assert plan.reduced_vars == ("c",)
        assert plan.steps[0].depends_on == ("c",) and plan.steps[1].depends_on == ("b",)
        assert plan.kind == "progressive" and plan.check_order()

    def test_direct(self):
        sde = self.chain(["c", "c^2", "-c"], [["1", "0"], ["0", "c"], ["0", "1"]])
        assert build_reconstruction_plan(sde, 2).kind == "direct"

    def test_empty(self):
        sde = self.chain(["a", "b", "c"], [["1", "0"], ["0", "1"], ["1", "1"]])
        plan = build_reconstruction_plan(sde, 0)
        assert plan.kind == "empty" and plan.reduced_vars == ("a", "b", "c")

    def test_not_triangular(self):
        sde = self.chain(["a", "c", "0"], [["1", "0"], ["0", "1"], ["1", "0"]])
        with pytest.raises(TriangularityError, match="row a independent of a"):
            build_reconstruction_plan(sde, 2)
        sde = self.chain(["0", "a", "0"], [["1", "0"], ["0", "1"], ["1", "0"]])
        with pytest.raises(TriangularityError, match="row b independent of a"):
            build_reconstruction_plan(sde, 2)

    def test_coordinate_order(self):
        sde = self.chain(["0", "a", "0"], [["1", "0"], ["0", "1"], ["1", "0"]])
        plan = build_reconstruction_plan(sde, 2, ("b", "a", "c"))
        assert [s.coord for s in plan.steps] == ["a", "b"]
        with pytest.raises(ValueError):
            build_reconstruction_plan(sde, 2, ("a", "b"))
        with pytest.raises(ValueError):
            build_reconstruction_plan(sde, 4)

    def test_pins_ignored_coordinates(self):
        sde = self.chain(["b+sin(a)^2+cos(a)^2-1", "c", "0"], [["1", "0"], ["0", "1"], ["1", "0"]])
        plan = build_reconstruction_plan(sde, 2)
        step = plan.steps[1]
        assert step.coord == "a" and "a" not in step.drift.free

    def test_check_order_detects_forward_reference(self):
        bad = ReconstructionPlan(("a", "b"), ("b",), (PlanStep("a", parse("z"), (parse("1"),), ("z",)),))
        assert not bad.check_order()

    def test_round_trip(self):
        sde = self.chain(["b", "c", "-c"], [["1", "0"], ["c", "0"], ["0", "1"]])
        plan = build_reconstruction_plan(sde, 2)
        again = ReconstructionPlan.from_dict(plan.as_dict())
        assert again.as_dict() == plan.as_dict()


class TestIntegrable:
    def test_one_dimensional_brownian(self):
        sde = SdeModel.from_strings(["x"], ["0"], [["1"]], boxes={"x": (-1, 1)})
        assert is_integrable(sde, [strong(("x",), "1", m=1)]).verdict == "yes"

    def test_too_few_symmetries(self):
        sde = brownian()
        v = is_integrable(sde, [strong(sde.vars, "1", "0")])
        assert v.verdict == "unknown" and "dimension" in v.reason

    def test_non_strong(self, scenario):
        sc = scenario("singular")
        assert is_integrable(sc.model(), sc.triads()).verdict == "unknown"

    def test_non_symmetry(self):
        sde = SdeModel.from_strings(["x"], ["x"], [["1"]], boxes={"x": (-1, 1)})
        v = is_integrable(sde, [strong(("x",), "1", m=1)])
        assert v.verdict == "unknown" and "not a symmetry" in v.reason

    def test_plane_translations(self):
        sde = brownian()
        assert is_integrable(sde, [strong(sde.vars, "1", "0"), strong(sde.vars, "0", "1")]).verdict == "yes"
