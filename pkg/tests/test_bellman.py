import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_hardy.bellman import (
    DomainError,
    SingularPointError,
    appendix_eigenvalue,
    bellman_derivatives,
    bellman_value,
    bounds_margin,
    compose_point,
    domain_mask,
    domain_support_concavity,
    hessian_eigenvalue,
    hessian_spectrum,
    in_domain,
    lemma_minimizer,
    lemma_scalar_phi,
    midpoint_margin,
    sample_domain_points,
    support_function,
    telescoping_replay,
)
from dyadic_hardy.probe import saturating_alpha
from dyadic_hardy.tree import PExponent, build_instance, compute_aggregates
from oracles import central_gradient, central_jacobian, random_instance, random_lemma_tuples


def interior_points(gen, n, exp):
    """Domain points kept at a relative distance from every face."""
    p = exp.p
    v = 10.0 ** gen.uniform(-1, 1, n)
    F = 10.0 ** gen.uniform(-1, 1, n)
    A = v * gen.uniform(0.1, 0.9, n)
    f = (F * v ** (p - 1)) ** (1 / p) * gen.uniform(0.1, 0.9, n)
    return np.stack([F, f, A, v], axis=-1)


class TestValue:
    def test_unit_point(self, p2):
        assert bellman_value((1, 1, 1, 1), p2) == 2.0

    def test_f_zero_attains_upper_bound(self, exp):
        assert bellman_value((2.5, 0, 0.3, 1.2), exp) == pytest.approx(exp.c_p * 2.5, rel=1e-15)

    def test_lower_bound_approached(self, p2):
        assert bellman_value((1, 1, 1e-12, 1), p2) == pytest.approx(0.0, abs=1e-11)

    def test_broadcasts(self, exp):
        pts = sample_domain_points(np.random.default_rng(0), 50, exp)
        vec = bellman_value(pts, exp)
        assert vec.shape == (50,)
        assert vec[7] == pytest.approx(bellman_value(pts[7], exp), rel=1e-15)

    def test_outside_domain_names_constraint(self, p2):
        with pytest.raises(DomainError, match="f\\^p"):
            bellman_value((1, 2, 1, 1), p2)

    def test_homogeneous_degree_one(self, exp):
        pts = sample_domain_points(np.random.default_rng(2), 100, exp)
        np.testing.assert_allclose(bellman_value(3.0 * pts, exp), 3.0 * bellman_value(pts, exp), rtol=1e-11, atol=1e-12 * exp.c_p * pts[:, 0].max())


class TestDomain:
    @pytest.mark.parametrize(
        "x, ok",
        [((1, 1, 1, 1), True), ((1, 2, 1, 1), False), ((1, 1, 2, 1), False), ((1, 1, 0, 1), False), ((-1, 0, 1, 1), False)],
    )
    def test_examples(self, p2, x, ok):
        assert bool(in_domain(x, p2)) is ok

    def test_diagnostic_lists_violations(self, p2):
        check = in_domain((1, 2, 2, 1), p2)
        assert not check.ok and len(check.violations) == 2

    def test_closed_domain_allows_zero_A(self, p2):
        assert in_domain((1, 1, 0, 1), p2, closed=True)

    def test_relative_slack(self, p2):
        assert in_domain((1, 1 + 4e-13, 1, 1), p2)
        assert not in_domain((1, 1 + 1e-10, 1, 1), p2)

    def test_sampler_stays_inside(self, exp):
        pts = sample_domain_points(np.random.default_rng(1), 10_000, exp)
        assert domain_mask(pts, exp).all()

    def test_convexity_of_domain(self, exp):
        gen = np.random.default_rng(3)
        x, y = (sample_domain_points(gen, 10_000, exp) for _ in range(2))
        assert domain_mask(0.5 * (x + y), exp).all()


class TestDerivatives:
    def test_unit_point(self, p2):
        grad, hess = bellman_derivatives((1, 1, 1, 1), p2)
        np.testing.assert_allclose(grad, [4, -4, 1, 1], rtol=1e-15)
        assert not hess[0].any() and not hess[:, 0].any()
        assert hess[1, 1] == pytest.approx(-4.0)

    def test_dv_is_p_minus_one_times_dA(self, exp):
        grad, _ = bellman_derivatives(sample_domain_points(np.random.default_rng(4), 200, exp), exp)
        np.testing.assert_allclose(grad[:, 3], (exp.p - 1) * grad[:, 2], rtol=1e-15)

    @pytest.mark.parametrize("trial", range(10))
    def test_finite_differences(self, exp, trial):
        # 10 trials x 5 exponents x 20 points = 1e3 points
        pts = interior_points(np.random.default_rng([5, trial]), 20, exp)
        value = lambda y: bellman_value(y, exp, check=False)  # noqa: E731
        grad_of = lambda y: bellman_derivatives(y, exp, check=False)[0]  # noqa: E731
        for x in pts:
            grad, hess = bellman_derivatives(x, exp)
            g_fd = central_gradient(value, x)
            h_fd = central_jacobian(grad_of, x)
            assert np.linalg.norm(g_fd - grad) <= 1e-5 * np.linalg.norm(grad)
            assert np.linalg.norm(h_fd - hess) <= 1e-5 * np.linalg.norm(hess)

    def test_second_differences_of_value(self, p2):
        # Hessian against second differences of B itself, at a coarser step
        x = np.array([1.3, 0.8, 0.4, 1.1])
        _, hess = bellman_derivatives(x, p2)
        h = 1e-3
        fd = np.empty((4, 4))
        for i in range(4):
            for j in range(4):
                ei, ej = np.eye(4)[i] * h, np.eye(4)[j] * h
                fd[i, j] = (
                    bellman_value(x + ei + ej, p2, check=False) - bellman_value(x + ei - ej, p2, check=False)
                    - bellman_value(x - ei + ej, p2, check=False) + bellman_value(x - ei - ej, p2, check=False)
                ) / (4 * h * h)
        np.testing.assert_allclose(fd, hess, rtol=1e-4, atol=1e-5)


class TestSpectrum:
    def test_rank_one_structure(self, exp):
        pts = interior_points(np.random.default_rng(6), 200, exp)
        _, hess = bellman_derivatives(pts, exp)
        eig = np.linalg.eigvalsh(hess)
        lam = hessian_eigenvalue(pts, exp)
        norm = np.linalg.norm(hess, axis=(1, 2))
        assert np.all(np.abs(eig[:, 1:]) <= 1e-8 * norm[:, None])
        np.testing.assert_allclose(eig[:, 0], lam, rtol=1e-10)
        assert np.all(lam <= 0)

    def test_unit_point_value(self, p2):
        # H = -k w w^T, w = (0, 2, -1, -1), k = 1: eigenvalue -|w|^2 = -6
        assert hessian_eigenvalue((1, 1, 1, 1), p2) == pytest.approx(-6.0, rel=1e-15)
        np.testing.assert_allclose(hessian_spectrum((1, 1, 1, 1), p2), [0, 0, 0, -6])

    def test_appendix_closed_form_kept_separately(self, p2):
        assert appendix_eigenvalue((1, 1, 1, 1), p2) == pytest.approx(-48.0, rel=1e-15)

    def test_trace_identity(self, exp):
        # the only nonzero eigenvalue of a rank-one matrix is its trace
        pts = interior_points(np.random.default_rng(7), 100, exp)
        _, hess = bellman_derivatives(pts, exp)
        np.testing.assert_allclose(np.trace(hess, axis1=1, axis2=2), hessian_eigenvalue(pts, exp), rtol=1e-13)

    def test_vanishes_as_f_goes_to_zero_for_large_p(self):
        e = PExponent(3.0)
        vals = [abs(hessian_eigenvalue((1, f, 1, 1), e)) for f in (1e-2, 1e-4, 1e-6)]
        assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-4

    def test_singular_for_small_p(self):
        with pytest.raises(SingularPointError):
            hessian_eigenvalue((1, 0, 1, 1), PExponent(1.5))


class TestSupportFunction:
    def test_unit_point(self, p2):
        assert domain_support_concavity(1.0, 1.0, p2) == pytest.approx((0.0, -0.5))

    def test_against_finite_difference_hessian(self, exp):
        F, v = 1.7, 0.6
        h = lambda z: float(support_function(z[0], z[1], exp))  # noqa: E731
        grad = lambda z: central_gradient(h, z, 1e-4)  # noqa: E731
        H = central_jacobian(grad, np.array([F, v]), 1e-4)
        eig = np.sort(np.linalg.eigvalsh(0.5 * (H + H.T)))
        lam1, lam2 = domain_support_concavity(F, v, exp)
        assert abs(eig[1]) < 1e-5 * abs(eig[0])
        # the nonzero eigenvalue is the Hessian trace
        assert eig[0] == pytest.approx(lam2, rel=1e-4)

    def test_homogeneous(self, exp):
        assert support_function(4.0, 2.0, exp) == pytest.approx(2 * support_function(2.0, 1.0, exp), rel=1e-15)

    def test_midpoint_concave(self, exp):
        gen = np.random.default_rng(8)
        x = 10.0 ** gen.uniform(-3, 3, (2, 10_000))
        y = 10.0 ** gen.uniform(-3, 3, (2, 10_000))
        mid = support_function(*(0.5 * (x + y)), exp)
        avg = 0.5 * (support_function(*x, exp) + support_function(*y, exp))
        assert np.all(mid >= avg * (1 - 1e-13))

    def test_rejects_nonpositive(self, p2):
        with pytest.raises(ValueError):
            domain_support_concavity(0.0, 1.0, p2)


class TestLemma:
    def test_scalar_at_a_zero(self, exp):
        assert lemma_scalar_phi(3.0, 0.0, 1.5, exp) == pytest.approx(exp.c_p * 1.5**exp.p)

    def test_scalar_minimum_example(self, p2):
        assert lemma_minimizer(1.0, 1.0, p2) == 1.0
        assert lemma_scalar_phi(1.0, 1.0, 1.0, p2) == 0.0

    def test_grid_scan(self):
        gen = np.random.default_rng(9)
        for _ in range(1000):
            p = gen.uniform(1.1, 5.0)
            e = PExponent(p)
            a, b = 10.0 ** gen.uniform(-1, 1, 2)
            y_star = lemma_minimizer(a, b, e)
            ys = np.linspace(0, 10 * y_star, 2001)
            vals = lemma_scalar_phi(ys, a, b, e)
            scale = e.c_p * b**p
            assert vals.min() >= -1e-10 * scale
            assert abs(ys[np.argmin(vals)] - y_star) <= 10 * y_star / 2000 + 1e-12
            assert abs(lemma_scalar_phi(y_star, a, b, e)) <= 1e-10 * scale

    def test_degenerate_midpoint(self, exp):
        x = sample_domain_points(np.random.default_rng(10), 1, exp)[0]
        assert midpoint_margin(x, x, 0, 0, 0, exp) == pytest.approx(0.0, abs=1e-15 * exp.c_p * x[0])

    def test_worked_example(self, p2):
        xm = (1, 1, 0.5, 1)
        np.testing.assert_allclose(compose_point(xm, xm, 0, 0, 0.5, p2), [1, 1, 1, 1])
        assert midpoint_margin(xm, xm, 0, 0, 0.5, p2) == pytest.approx(1 / 6, rel=1e-14)

    def test_random_tuples(self, exp):
        xm, xp, a, b, c = random_lemma_tuples(np.random.default_rng(11), 20_000, exp)
        strong = midpoint_margin(xm, xp, a, b, c, exp)
        weak = midpoint_margin(xm, xp, a, b, c, exp, kind="weak")
        x = compose_point(xm, xp, a, b, c, exp)
        scale = exp.c_p * x[:, 0] + c * exp.p**exp.p
        assert np.all(strong >= -1e-9 * scale)
        assert np.all(weak >= -1e-9 * scale)
        # the strong form subtracts the larger rate, so it implies the weak form
        assert np.all(weak >= strong - 1e-12 * scale)

    def test_composed_point_outside_domain(self, p2):
        with pytest.raises(DomainError):
            midpoint_margin((1, 1, 1, 1), (1, 1, 1, 1), 0, 0, 1.0, p2)

    def test_unknown_kind(self, p2):
        with pytest.raises(ValueError):
            midpoint_margin((1, 1, 1, 1), (1, 1, 1, 1), 0, 0, 0, p2, kind="medium")


class TestBounds:
    def test_examples(self, p2, exp):
        assert bounds_margin((1, 1, 1, 1), p2) == (2.0, 2.0)
        assert bounds_margin((3, 0, 1, 2), exp) == pytest.approx((3 * exp.c_p, 0.0))

    def test_random(self, exp):
        pts = sample_domain_points(np.random.default_rng(12), 10_000, exp)
        lower, upper = bounds_margin(pts, exp)
        scale = exp.c_p * pts[:, 0]
        assert np.all(lower >= -1e-12 * scale) and np.all(upper >= -1e-12 * scale)

    def test_midpoint_concavity(self, exp):
        gen = np.random.default_rng(13)
        x, y = (sample_domain_points(gen, 10_000, exp) for _ in range(2))
        mid = bellman_value(0.5 * (x + y), exp)
        avg = 0.5 * (bellman_value(x, exp) + bellman_value(y, exp))
        scale = exp.c_p * (x[:, 0] + y[:, 0])
        assert np.all(mid - avg >= -1e-12 * scale)


class TestTelescoping:
    def test_three_node(self, three_node, p2):
        cert = telescoping_replay(three_node, p2)
        assert cert.lhs == pytest.approx(0.6)
        assert cert.bellman_root == pytest.approx(bellman_value((2, 2, 0.6, 2), p2))
        assert cert.upper == pytest.approx(8.0)
        assert cert.holds()

    def test_margins_telescope(self, exp):
        inst = random_instance(np.random.default_rng(14), 6, exp.p)
        cert = telescoping_replay(inst, exp)
        assert np.sum(cert.margins) == pytest.approx(cert.bellman_root - cert.lhs, rel=1e-10, abs=1e-12)

    def test_zero_phi(self, exp):
        inst = random_instance(np.random.default_rng(15), 4, exp.p, phi=np.zeros(31))
        cert = telescoping_replay(inst, exp)
        assert cert.lhs == 0.0 and cert.bellman_root == 0.0 and cert.holds()

    @pytest.mark.parametrize("trial", range(25))
    def test_saturated_random(self, trial):
        gen = np.random.default_rng([16, trial])
        p = float(gen.choice([1.25, 1.5, 2.0, 3.0, 4.0]))
        e = PExponent(p)
        depth = int(gen.integers(0, 9))
        inst = random_instance(gen, depth, p, slack=False)
        cert = telescoping_replay(inst, e)
        assert cert.min_relative_margin >= -1e-9
        assert cert.chain_holds()

    def test_failing_condition_names_node(self, three_node, p2):
        with pytest.raises(DomainError, match="node 1") as info:
            telescoping_replay(three_node.with_alpha([1, 0.1, 0.1]), p2)
        assert info.value.node == 1

    def test_root_point_matches_aggregates(self, three_node, p2):
        agg = compute_aggregates(three_node, p2)
        np.testing.assert_allclose(agg.point(1), [2, 2, 0.6, 2])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([1.25, 2.0, 3.0]), st.floats(1e-2, 1e2), st.floats(0.0, 1.0), st.floats(0.01, 1.0), st.floats(1e-2, 1e2))
def test_value_within_bounds_property(p, F, fr, ar, v):
    e = PExponent(p)
    x = (F, fr * (F * v ** (p - 1)) ** (1 / p), ar * v, v)
    lower, upper = bounds_margin(x, e)
    assert lower >= -1e-12 * e.c_p * F and upper >= -1e-12 * e.c_p * F


def test_saturated_instance_sits_on_face(p2):
    lam = np.ones(7) / np.repeat([1, 2, 4], [1, 2, 4])
    inst = build_instance(2, saturating_alpha(2, lam, p2).alpha, lam, lam**0.5)
    pts = compute_aggregates(inst, p2).points
    np.testing.assert_allclose(pts[:, 2], pts[:, 3], rtol=1e-12)
