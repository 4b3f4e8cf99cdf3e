import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdesym.expr import Const, is_zero
from sdesym.linalg import eye
from sdesym.parse import parse
from sdesym.sampling import equiv_zero
from sdesym.scenario import bundled_names, load_bundled
from sdesym.symmetry import AnsatzSpace, InconclusiveError, determining_residual, find_symmetries, is_symmetry, verify_strongification
from sdesym.transform import InfinitesimalTransformation, apply_to_sde, lie_bracket, pushforward

WITH_IMAGE = [n for n in bundled_names() if load_bundled(n).transformation and load_bundled(n).transformation.phi_inv]


def test_sabr_residual_vanishes(scenario):
    sc = scenario("sabr")
    sde, v1 = sc.model(), sc.triads()[0]
    res = determining_residual(sde, v1)
    assert all(equiv_zero(e, sde.sampler()) for e in res.entries())
    assert len(res.entries()) == 2 * 2 + 2


def test_kp1d_translation_detected(scenario):
    sde = scenario("kp1d-generic").model()
    v = InfinitesimalTransformation.strong(("x",), (Const(1),), 1)
    res = determining_residual(sde, v)
    # Y(mu) - L(Y) = lam * 1 = 1 at the generic parameters
    assert equiv_zero(res.r_mu[0] - 1, sde.sampler())


def test_zero_triad(scenario):
    sde = scenario("kp2d").model()
    zero = InfinitesimalTransformation.strong(sde.vars, (Const(0), Const(0)), 2)
    assert all(is_zero(e) for e in determining_residual(sde, zero).entries())


@pytest.mark.parametrize("name", ["singular", "mechanics-oscillator", "mechanics-central-force", "sabr", "kp2d"])
def test_bundled_symmetries(scenario, name):
    sc = scenario(name)
    for spec, v in zip(sc.symmetries, sc.triads()):
        verdict = is_symmetry(sc.model(), v)
        assert verdict.ok == (spec.expect == "pass"), spec.name
        if spec.expect == "pass":
            assert verdict.max_abs < 1e-9


def test_failure_carries_witness(scenario):
    sc = scenario("mechanics-oscillator")
    bad = sc.symmetry_named("Vbad")
    verdict = is_symmetry(sc.model(), bad)
    assert not verdict.ok
    assert set(verdict.witness) >= {"x", "v"} and verdict.failed_entry
    assert abs(verdict.residual) > 1e-6


@pytest.mark.parametrize("name", WITH_IMAGE)
def test_pushforward_covariance(name):
    sc = load_bundled(name)
    sde, t = sc.model(), sc.transform()
    out = apply_to_sde(t, sde)
    for spec, v in zip(sc.symmetries, sc.triads()):
        if spec.expect != "pass":
            continue
        pv = pushforward(t, v, sampler=sde.sampler())
        assert is_symmetry(out, pv).ok, (name, spec.name)


@given(st.integers(-5, 5), st.integers(-5, 5))
def test_symmetries_form_linear_space(a, b):
    sc = load_bundled("kp2d")
    v1, v2 = sc.triads()
    assert is_symmetry(sc.model(), v1.scaled(a) + v2.scaled(b), trials=30).ok


@pytest.mark.parametrize("name", ["kp2d", "sabr"])
def test_bracket_closure(scenario, name):
    sc = scenario(name)
    v1, v2 = sc.triads()
    assert is_symmetry(sc.model(), lie_bracket(v1, v2)).ok


class TestFind:
    def basis(self, sc):
        return [sc.parse_in(b, sc.vars, "basis") for b in sc.find["basis"]]

    @pytest.mark.parametrize("seed", range(5))
    def test_kp1d_dimension_one(self, scenario, seed):
        sc = scenario("kp1d")
        res = find_symmetries(sc.model(), AnsatzSpace.full(self.basis(sc), 1), seed=seed)
        assert res.dimension == 1
        y = res.symmetries[0].y[0]
        assert equiv_zero(y - parse("sqrt(x^2+1)"), sc.model().sampler())

    @pytest.mark.parametrize("seed", range(5))
    def test_kp1d_generic_empty(self, scenario, seed):
        sc = scenario("kp1d-generic")
        assert find_symmetries(sc.model(), AnsatzSpace.full(self.basis(sc), 1), seed=seed).dimension == 0

    def test_counterexample(self, scenario):
        sc = scenario("counterexample")
        res = find_symmetries(sc.model(), AnsatzSpace.full(self.basis(sc), 2))
        assert res.dimension == 1
        v = res.symmetries[0]
        assert v.y == (Const(0), Const(1)) and v.c == ((Const(0),),) and v.tau == Const(0)

    def test_with_c_and_tau(self, scenario):
        # letting C and tau vary adds no new symmetries for the 1-D example
        sc = scenario("kp1d")
        res = find_symmetries(sc.model(), AnsatzSpace.full(self.basis(sc), 1, with_tau=True))
        assert res.dimension == 1

    def test_degenerate_basis_inconclusive(self, scenario):
        sc = scenario("kp1d")
        basis = [parse("1"), parse("x"), parse("2*x")]
        with pytest.raises(InconclusiveError):
            find_symmetries(sc.model(), AnsatzSpace.full(basis, 1))

    def test_sample_budget(self, scenario):
        sc = scenario("kp1d")
        with pytest.raises(ValueError, match="budget"):
            find_symmetries(sc.model(), AnsatzSpace.full(self.basis(sc), 1), n_points=4)


class TestStrongification:
    def test_kp_pair(self, scenario):
        sc = scenario("kp2d")
        t = sc.transform()
        rep = verify_strongification(sc.triads(), t.b, t.eta, sc.model().sampler())
        assert rep.ok and all(rep.strong_after)

    def test_singular(self, scenario):
        sc = scenario("singular")
        t = sc.transform()
        assert verify_strongification(sc.triads(), t.b, t.eta, sc.model().sampler()).ok

    def test_strong_inputs_trivial(self, scenario):
        sc = scenario("mechanics-oscillator")
        v = sc.symmetry_named("V")
        assert verify_strongification([v], eye(1), Const(1), sc.model().sampler()).ok

    def test_wrong_b_fails(self, scenario):
        sc = scenario("kp2d")
        assert not verify_strongification(sc.triads(), eye(2), Const(1), sc.model().sampler()).ok
