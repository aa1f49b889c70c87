import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_hardy.hardy import (
    adjointness_gap,
    ancestor_sum,
    descendant_sum,
    dual_constant_candidates,
    dual_data,
    dual_ratio,
    hardy_lhs,
    hardy_ratio,
    hardy_rhs,
    necessity_identity,
    subtree_nodes,
)
from dyadic_hardy.tree import PExponent, build_instance, compute_aggregates, node_count
from oracles import brute_aggregates, brute_ancestor_sum, containment_mask, random_instance


def test_three_node_sides(three_node, p2):
    agg = compute_aggregates(three_node, p2)
    assert hardy_lhs(agg, three_node, p2) == pytest.approx(0.6, rel=1e-14)
    assert hardy_rhs(agg, p2) == pytest.approx(8.0, rel=1e-14)
    assert hardy_ratio(three_node, p2) == pytest.approx(0.3, rel=1e-14)


def test_single_node_lhs(p2):
    inst = build_instance(0, [1], [1], [1])
    assert hardy_lhs(compute_aggregates(inst, p2), inst, p2) == 1.0


def test_zero_phi(three_node, p2):
    inst = three_node.with_phi([0, 0, 0])
    agg = compute_aggregates(inst, p2)
    assert hardy_lhs(agg, inst, p2) == 0.0 and hardy_rhs(agg, p2) == 0.0
    with pytest.raises(ZeroDivisionError):
        hardy_ratio(inst, p2)


@settings(deadline=None)
@given(st.floats(1e-2, 10), st.floats(1e-2, 10), st.floats(1e-3, 10), st.floats(1.1, 5))
def test_depth_zero_ratio_is_phi_free(alpha, lam, phi, p):
    e = PExponent(p)
    inst = build_instance(0, [alpha], [lam], [phi])
    assert hardy_ratio(inst, e) == pytest.approx(alpha * lam ** (p - 1), rel=1e-12)


def test_ratio_scale_invariant(exp):
    inst = random_instance(np.random.default_rng(1), 5, exp.p)
    r = hardy_ratio(inst, exp)
    for t in (1e-3, 0.7, 40.0):
        assert hardy_ratio(inst.with_phi(t * inst.phi), exp) == pytest.approx(r, rel=1e-12)


class TestNecessity:
    def test_three_node_root(self, three_node, p2):
        assert necessity_identity(three_node, p2, 1) == pytest.approx((0.6, 2.0), rel=1e-14)

    def test_depth_zero(self, exp):
        inst = build_instance(0, [0.3], [1.7], [0.0])
        lhs, rhs = necessity_identity(inst, exp, 1)
        assert lhs == pytest.approx(0.3 * 1.7**exp.p, rel=1e-14)
        assert rhs == pytest.approx(1.7, rel=1e-14)

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_brute_force_every_node(self, trial):
        gen = np.random.default_rng([21, trial])
        p = float(gen.choice([1.25, 1.5, 2.0, 3.0, 4.0]))
        depth = int(gen.integers(0, 7))
        inst = random_instance(gen, depth, p)
        _, v, _, _, A = brute_aggregates(inst.alpha, inst.lam, inst.phi, p)
        for node in range(1, inst.n_nodes + 1):
            lhs, rhs = necessity_identity(inst, PExponent(p), node)
            assert lhs == pytest.approx(A[node - 1], rel=1e-12)
            assert rhs == pytest.approx(v[node - 1], rel=1e-12)

    def test_rejects_bad_node(self, three_node, p2):
        with pytest.raises(IndexError):
            necessity_identity(three_node, p2, 4)


class TestAncestorSum:
    def test_examples(self, three_node):
        assert ancestor_sum([1, 1, 1], three_node).tolist() == [1, 2, 2]
        assert ancestor_sum([1, 0, 0], three_node).tolist() == [1, 1, 1]
        assert ancestor_sum([0, 1, 0], three_node).tolist() == [0, 1, 0]

    @pytest.mark.parametrize("depth", [0, 2, 5, 8])
    def test_matches_brute_force(self, depth):
        gen = np.random.default_rng(depth)
        n = node_count(depth)
        inst = build_instance(depth, np.ones(n), np.ones(n), np.zeros(n))
        psi = gen.normal(size=n)
        np.testing.assert_allclose(ancestor_sum(psi, inst), brute_ancestor_sum(psi), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("depth", [0, 3, 6])
    def test_descendant_sum_matches_brute_force(self, depth):
        x = np.random.default_rng(depth).normal(size=node_count(depth))
        want = containment_mask(x.size).astype(float) @ x
        np.testing.assert_allclose(descendant_sum(x, depth), want, rtol=1e-12, atol=1e-12)

    def test_subtree_nodes(self):
        assert subtree_nodes(2, 2).tolist() == [1, 3, 4]
        assert subtree_nodes(1, 1).tolist() == [0, 1, 2]


class TestAdjointness:
    def test_hand_example(self):
        inst = build_instance(1, [1, 1, 1], [1, 0.5, 0.5], [0, 0, 0])
        assert adjointness_gap([1, 1, 1], [1, 1, 1], inst) == 0.0
        assert float(np.sum(ancestor_sum([1, 1, 1], inst) * inst.lam)) == 3.0

    def test_zero_eta(self, three_node):
        assert adjointness_gap([0, 0, 0], [0.3, 2, 1], three_node) == 0.0

    @pytest.mark.parametrize("trial", range(10))
    def test_random_brute_double_sum(self, trial):
        gen = np.random.default_rng([31, trial])
        depth = int(gen.integers(0, 9))
        inst = random_instance(gen, depth, 2.0)
        eta, psi = gen.uniform(size=(2, inst.n_nodes))
        M = containment_mask(inst.n_nodes)
        # sum over pairs (J contains I) of psi(J) eta(I) lam_I
        brute = float(np.sum(M * psi[:, None] * (eta * inst.lam)[None, :]))
        mag = float(np.sum(ancestor_sum(psi, inst) * eta * inst.lam))
        assert brute == pytest.approx(mag, rel=1e-12)
        assert abs(adjointness_gap(eta, psi, inst)) <= 1e-12 * mag


class TestDual:
    def test_eta_reconstructs_phi(self, exp):
        inst = random_instance(np.random.default_rng(4), 4, exp.p)
        d = dual_data(inst, exp)
        np.testing.assert_allclose(d.eta * inst.lam ** (1 / exp.p), inst.phi, rtol=1e-14, atol=0)
        assert np.all(np.isfinite(d.omega) & (d.omega > 0))

    def test_depth_zero(self, exp):
        inst = build_instance(0, [0.4], [2.5], [1.0])
        want = 2.5 * 0.4 ** (1 / (exp.p - 1))
        assert dual_ratio(inst, [3.0], exp) == pytest.approx(want, rel=1e-13)

    def test_depth_zero_p2(self, p2):
        inst = build_instance(0, [0.4], [2.5], [1.0])
        assert dual_ratio(inst, [1.0], p2) == pytest.approx(1.0, rel=1e-14)

    def test_scale_invariant(self, exp):
        inst = random_instance(np.random.default_rng(9), 4, exp.p)
        psi = np.random.default_rng(10).uniform(size=inst.n_nodes)
        assert dual_ratio(inst, 5.0 * psi, exp) == pytest.approx(dual_ratio(inst, psi, exp), rel=1e-12)

    def test_errors(self, three_node, p2):
        with pytest.raises(ZeroDivisionError):
            dual_ratio(three_node, [0, 0, 0], p2)
        with pytest.raises(ValueError):
            dual_ratio(three_node, [1, -1, 0], p2)

    def test_constant_candidates(self):
        c = dual_constant_candidates(PExponent(3.0))
        assert c["c_p"] == pytest.approx(3.375)
        assert c["c_p_pow_conj_over_p"] == pytest.approx(3.375**0.5)
