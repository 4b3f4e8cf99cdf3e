import math

import pytest

from sdesym.expr import Const, Var, is_zero
from sdesym.linalg import eye, flat, matmul
from sdesym.parse import parse
from sdesym.sampling import DomainSampler, ImageSampler, zero_check_all
from sdesym.transform import (
    FlowExit,
    InfinitesimalTransformation,
    MissingInverse,
    StochasticTransformation,
    VariableMismatch,
    apply_to_sde,
    compose,
    flow,
    identity,
    inverse,
    lie_bracket,
    matrix_bracket,
    pushforward,
    rotation_from_angle,
    rotation_from_cosine,
    skew_check,
    validate_transformation,
)

import randomized as rnd


def same_transformation(t1, t2, sampler):
    res = [a - b for a, b in zip(t1.phi, t2.phi)]
    res += [a - b for a, b in zip(flat(t1.b), flat(t2.b))]
    res.append(t1.eta - t2.eta)
    return zero_check_all(res, sampler)


def same_triad(v1, v2, sampler):
    return zero_check_all([a - b for a, b in zip(v1.entries(), v2.entries())], sampler)


def test_compose_with_identity(scenario):
    sc = scenario("kp2d")
    t = sc.transform()
    s = sc.model().sampler()
    assert same_transformation(compose(t, identity(t.src_vars, 2)), t, s).ok
    assert same_transformation(compose(identity(t.dst_vars, 2), t), t, s).ok


def test_inverse_of_kp_chart(scenario):
    t = scenario("kp2d").transform()
    inv = inverse(t)
    assert inv.phi == (parse("xp*exp(zp)"), parse("exp(zp)"))
    s = scenario("kp2d").model().sampler()
    assert same_transformation(compose(inv, t), identity(t.src_vars, 2), s).ok


def test_inverse_identity():
    i = identity(("x", "z"), 2)
    j = inverse(i)
    assert j.phi == i.phi and j.b == i.b and j.eta == i.eta


def test_inverse_time_change():
    t = StochasticTransformation(("x",), ("y",), (Var("x") * 2,), eye(1), parse("1+x^2"), {"x": parse("y/2")})
    assert zero_check_all([inverse(t).eta - parse("1/(1+y^2/4)")], DomainSampler({"y": (-2, 2)})).ok


def test_inverse_needs_chart():
    t = StochasticTransformation(("x",), ("y",), (parse("x^3"),), eye(1), Const(1), None)
    with pytest.raises(MissingInverse):
        inverse(t)


def test_compose_rotations():
    x = Var("x")
    b1, b2 = rotation_from_angle(x), rotation_from_angle(parse("x^2"))
    t1 = StochasticTransformation(("x", "z"), ("x", "z"), (x, Var("z")), b1, Const(1), {"x": x, "z": Var("z")})
    t2 = StochasticTransformation(("x", "z"), ("x", "z"), (x, Var("z")), b2, Const(1), {"x": x, "z": Var("z")})
    c = compose(t2, t1)
    s = DomainSampler({"x": (-2, 2), "z": (-1, 1)})
    assert zero_check_all([a - b for a, b in zip(flat(c.b), flat(matmul(b2, b1)))], s).ok


def test_compose_mismatch():
    t = identity(("x", "z"), 2)
    u = identity(("a", "b"), 2)
    with pytest.raises(VariableMismatch):
        compose(u, t)


@pytest.mark.parametrize("rng", rnd.draws(20, seed=1), ids=lambda r: "")
def test_group_axioms(rng):
    t1 = rnd.transformation(rng, ("x", "z"), ("p", "q"))
    t2 = rnd.transformation(rng, ("p", "q"), ("u", "w"))
    t3 = rnd.transformation(rng, ("u", "w"), ("r", "s"))
    src = DomainSampler(rnd.BOX, seed=4)
    assert same_transformation(compose(t3, compose(t2, t1)), compose(compose(t3, t2), t1), src).ok
    assert same_transformation(compose(inverse(t1), t1), identity(("x", "z"), 2), src).ok
    img = ImageSampler(src, dict(zip(t1.dst_vars, t1.phi)))
    assert same_transformation(compose(t1, inverse(t1)), identity(("p", "q"), 2), img).ok
    assert validate_transformation(t1, src)["ok"]


def test_apply_identity(scenario):
    sde = scenario("sabr").model()
    out = apply_to_sde(identity(sde.vars, 2), sde)
    assert out.mu == sde.mu and out.sigma == sde.sigma


def test_sabr_time_change(scenario):
    sc = scenario("sabr")
    out = apply_to_sde(sc.transform(), sc.model())
    want_mu = (parse("-1/2"), Const(0))
    assert zero_check_all([a - b for a, b in zip(out.mu, want_mu)], out.sampler()).ok
    assert zero_check_all([out.sigma[0][0] - 1, out.sigma[0][1]], out.sampler()).ok


def test_singular_preimage_form(scenario):
    sc = scenario("singular")
    out = apply_to_sde(sc.transform(), sc.model())
    assert out.preimage
    # drift (0, 2 alpha) and diffusion diag(z', -2 z') with z' = x^2 - z^2, alpha = 0.7
    zp = parse("x^2-z^2")
    res = [out.mu[0], out.mu[1] - parse("7/5"), out.sigma[0][0] - zp, out.sigma[0][1], out.sigma[1][0], out.sigma[1][1] + 2 * zp]
    assert zero_check_all(res, sc.model().sampler()).ok


def test_apply_dimension_mismatch(scenario):
    sde = scenario("kp1d").model()
    with pytest.raises(VariableMismatch):
        apply_to_sde(identity(("x", "z"), 2), sde)


@pytest.mark.parametrize("rng", rnd.draws(20, seed=2), ids=lambda r: "")
def test_apply_functorial(rng):
    sde = rnd.toy_sde()
    t1 = rnd.transformation(rng, ("x", "z"), ("p", "q"))
    t2 = rnd.transformation(rng, ("p", "q"), ("u", "w"))
    once = apply_to_sde(compose(t2, t1), sde)
    twice = apply_to_sde(t2, apply_to_sde(t1, sde))
    s = once.sampler()
    res = [a - b for a, b in zip(once.mu, twice.mu)] + [a - b for a, b in zip(flat(once.sigma), flat(twice.sigma))]
    assert zero_check_all(res, s).ok


class TestBracket:
    def test_self_bracket_vanishes(self, scenario):
        v = scenario("kp2d").triads()[0]
        assert all(is_zero(e) for e in lie_bracket(v, v).entries())

    def test_z_dx_z_dz(self):
        y1 = InfinitesimalTransformation.strong(("x", "z"), (Var("z"), Const(0)), 1)
        y2 = InfinitesimalTransformation.strong(("x", "z"), (Const(0), Var("z")), 1)
        br = lie_bracket(y1, y2)
        assert br.y == (parse("-z"), Const(0))

    def test_commuting_strong(self):
        y1 = InfinitesimalTransformation.strong(("x", "z"), (Const(1), Const(0)), 1)
        y2 = InfinitesimalTransformation.strong(("x", "z"), (Const(0), Const(1)), 1)
        assert all(is_zero(e) for e in lie_bracket(y1, y2).entries())

    @pytest.mark.parametrize("rng", rnd.draws(20, seed=3), ids=lambda r: "")
    def test_antisymmetry_and_jacobi(self, rng):
        names = ("x", "z")
        a, b, c = (rnd.triad(rng, names) for _ in range(3))
        s = DomainSampler(rnd.BOX, seed=6)
        ab, ba = lie_bracket(a, b), lie_bracket(b, a)
        assert zero_check_all([p + q for p, q in zip(ab.entries(), ba.entries())], s).ok
        j1 = lie_bracket(a, lie_bracket(b, c)).entries()
        j2 = lie_bracket(b, lie_bracket(c, a)).entries()
        j3 = lie_bracket(c, lie_bracket(a, b)).entries()
        assert zero_check_all([p + q + r for p, q, r in zip(j1, j2, j3)], s).ok


class TestMatrixBracket:
    def test_column_equal_to_field(self):
        h = (parse("x*z"), parse("sin(x)"))
        k = ((h[0],), (h[1],))
        assert all(is_zero(e) for row in matrix_bracket(h, k, ("x", "z")) for e in row)

    def test_constants(self):
        assert all(is_zero(e) for row in matrix_bracket((Const(1), Const(2)), ((Const(3),), (Const(4),)), ("x", "z")) for e in row)

    def test_sabr(self, scenario):
        sc = scenario("sabr")
        sde = sc.model()
        e = matrix_bracket((Const(0), Const(1)), sde.sigma, sde.vars)
        want = [["s^(9/10)", "0"], ["1/10", "sqrt(3)/10"]]  # alpha = 0.2, rho = 0.5
        res = [e[i][j] - parse(want[i][j]) for i in range(2) for j in range(2)]
        assert zero_check_all(res, sde.sampler()).ok
        # equals -tau/2 sigma with tau = -2/u
        res = [e[i][j] - sde.sigma[i][j] * parse("1/u") for i in range(2) for j in range(2)]
        assert zero_check_all(res, sde.sampler()).ok


class TestPushforward:
    def test_identity(self, scenario):
        v = scenario("sabr").triads()[1]
        pv = pushforward(identity(v.vars, 2), v)
        assert pv.entries() == v.entries()

    def test_kp_canonical_pair(self, scenario):
        sc = scenario("kp2d")
        t, (v1, v2) = sc.transform(), sc.triads()
        s = apply_to_sde(t, sc.model()).sampler()
        p1, p2 = pushforward(t, v1, sampler=sc.model().sampler()), pushforward(t, v2)
        assert zero_check_all([p1.y[0] - 1, p1.y[1]] + flat(p1.c) + [p1.tau], s).ok
        assert zero_check_all([p2.y[0] + Var("xp"), p2.y[1] - 1] + flat(p2.c) + [p2.tau], s).ok

    def test_sabr_u2_time_change(self, scenario):
        sc = scenario("sabr")
        v2 = sc.triads()[1]
        t = StochasticTransformation(("s", "u"), ("s", "u"), (Var("s"), Var("u")), eye(2), parse("u^2"), {"s": Var("s"), "u": Var("u")})
        pv = pushforward(t, v2)
        assert zero_check_all(flat(pv.c) + [pv.tau - parse("1/5")], sc.model().sampler()).ok  # 2(1 - beta), beta = 0.9

    def test_morphism_kp(self, scenario):
        sc = scenario("kp2d")
        t, (v1, v2) = sc.transform(), sc.triads()
        s = apply_to_sde(t, sc.model()).sampler()
        lhs = pushforward(t, lie_bracket(v1, v2))
        rhs = lie_bracket(pushforward(t, v1), pushforward(t, v2))
        assert same_triad(lhs, rhs, s).ok

    @pytest.mark.parametrize("rng", rnd.draws(20, seed=4), ids=lambda r: "")
    def test_morphism_random(self, rng):
        t = rnd.transformation(rng, ("x", "z"), ("p", "q"))
        v1, v2 = rnd.triad(rng, ("x", "z")), rnd.triad(rng, ("x", "z"))
        img = ImageSampler(DomainSampler(rnd.BOX, seed=8), dict(zip(t.dst_vars, t.phi)))
        lhs = pushforward(t, lie_bracket(v1, v2))
        rhs = lie_bracket(pushforward(t, v1), pushforward(t, v2))
        assert same_triad(lhs, rhs, img).ok
        assert skew_check(lhs.c, img).ok


class TestRotations:
    def test_cosine_branches(self):
        s = DomainSampler({"x": (-0.9, 0.9)})
        for branch in (1, -1):
            b = rotation_from_cosine(Var("x"), branch)
            t = StochasticTransformation(("x",), ("x",), (Var("x"),), b, Const(1), {"x": Var("x")})
            assert validate_transformation(t, s)["ok"]
        assert rotation_from_cosine(Var("x"), 1)[0][1] != rotation_from_cosine(Var("x"), -1)[0][1]

    def test_not_orthogonal(self):
        t = StochasticTransformation(("x",), ("x",), (Var("x"),), ((Const(2), Const(0)), (Const(0), Const(1))), Const(1), {"x": Var("x")})
        assert not validate_transformation(t, DomainSampler({"x": (0, 1)}))["ok"]


class TestFlow:
    def test_shear(self):
        v = InfinitesimalTransformation.strong(("x", "z"), (Var("z"), Const(0)), 1)
        end = flow(v, 0.7, {"x": 0.2, "z": 1.5})
        assert end["x"] == pytest.approx(0.2 + 0.7 * 1.5, abs=1e-12) and end["z"] == 1.5

    def test_zero_parameter(self):
        v = InfinitesimalTransformation.strong(("x",), (parse("x^2"),), 1)
        assert flow(v, 0.0, {"x": 0.3}) == {"x": 0.3}

    def test_rk4_accuracy(self):
        v = InfinitesimalTransformation.strong(("x",), (Var("x"),), 1)
        assert flow(v, 1.0, {"x": 1.0})["x"] == pytest.approx(math.e, rel=1e-10)

    def test_singular_exit(self, scenario):
        sc = scenario("singular")
        v = sc.triads()[0]
        with pytest.raises(FlowExit) as info:
            flow(v, -2.0, {"x": 1.0, "z": 1.0}, guards=sc.model().domain.guards)
        # x = z = h along the diagonal with h^2 = 1 + a reaches the excluded disc near a = -1
        assert -1.0 < info.value.parameter < -0.9

    def test_horizon(self):
        v = InfinitesimalTransformation.strong(("x",), (Const(1),), 1)
        with pytest.raises(ValueError):
            flow(v, 1e6, {"x": 0.0})
