import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmt.errors import ConfigurationError, DomainError, ResourceCapError
from dmt.model import polynomial_spectrum
from dmt.rates import Partition, detection_constant, second_moment_cap, separation_radius
from dmt.separation import (
    AdversaryConfig,
    SeparationQuery,
    adversarial_draw,
    feasibility_certificate,
    identifiability_gap,
    in_theta1,
    in_theta2,
    in_theta3,
    lr_second_moment_closed,
    lr_second_moment_cosh_squared,
    lr_second_moment_exp_bound,
    lr_second_moment_mc,
    prior_radius_sq,
    search_feasibility,
    separation_diagnostic,
)

A = B = 0.05
LN_CAB = math.log(second_moment_cap(A, B))


def random_instance(rng, m):
    b = np.sort(rng.uniform(0.2, 2.0, m))[::-1]
    bb = np.sort(rng.uniform(0.2, 2.0, m))[::-1]
    return rng.normal(size=m), b, bb, float(rng.uniform(0.05, 1.0))


def brute_lr_second_moment(bb, eps, tau):
    """Exact value from the one-dimensional identity E[cosh(l Z)**2] = exp(l**2) cosh(l**2),
    summed in log space; the prior mean and its pullback cancel out."""
    R2 = math.sqrt(LN_CAB) * eps**2 * math.sqrt(sum(x**-4 for x in bb))
    s4 = sum(x**-4 for x in bb)
    return math.exp(sum(math.log(math.cosh(tau**2 * R2 * x**-2 / (eps**2 * s4))) for x in bb))


class TestMembership:
    def test_null_is_never_in_theta1(self):
        q = SeparationQuery([1.0, 2.0], [1.0, 2.0], [[1.0, 0.5]], 0, 0.3, 1e-6)
        assert not in_theta1(q)

    def test_theta1_hand_value(self):
        assert in_theta1(SeparationQuery([1.0], [0.0], [[1.0]], 0, 1.0, 1.0))
        assert not in_theta1(SeparationQuery([0.999], [0.0], [[1.0]], 0, 1.0, 1.0))

    def test_theta1_boundary_included(self):
        b, eps = polynomial_spectrum(10, 0.5), 0.2
        C = 3.7
        u = np.ones(10) / math.sqrt(10)
        theta = u * math.sqrt(C * separation_radius(b, eps))
        assert in_theta1(SeparationQuery(theta, np.zeros(10), [b.values], 0, eps, C))

    def test_query_validation(self):
        with pytest.raises(DomainError):
            SeparationQuery([1.0], [0.0], [[1.0]], 1, 1.0, 1.0)
        with pytest.raises(DomainError):
            SeparationQuery([1.0], [0.0], [[1.0]], 0, 1.0, 0.0)

    def test_theta2_zero_separation(self):
        b, bt, th0 = np.array([1.0, 0.5]), np.array([0.8, 0.4]), np.array([1.0, 2.0])
        theta = bt * th0 / b
        assert not in_theta2(SeparationQuery(theta, th0, [b, bt], 0, 0.1, 1e-9))

    @pytest.mark.parametrize("t,expected", [(1.0, True), (-1.0, True), (0.999, False), (1.5, True), (0.5, False)])
    def test_theta2_one_coordinate(self, t, expected):
        # gap (t/2)**2 against radius 1/4 of the member (2): member iff |t| >= 1
        assert in_theta2(SeparationQuery([t], [0.0], [[1.0], [2.0]], 0, 1.0, 1.0)) is expected

    def test_theta2_single_member_is_vacuous(self):
        assert in_theta2(SeparationQuery([0.0], [0.0], [[1.0]], 0, 1.0, 100.0))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 50.0), st.floats(1.0, 5.0), st.integers(0, 10**6))
    def test_monotone_in_constant(self, C, factor, seed):
        rng = np.random.default_rng(seed)
        th0, b, bb, eps = random_instance(rng, 4)
        theta = th0 + rng.normal(size=4)
        members = [b, bb] if not np.array_equal(b, bb) else [b]
        for pred in (in_theta1, in_theta2):
            if pred(SeparationQuery(theta, th0, members, 0, eps, C * factor)):
                assert pred(SeparationQuery(theta, th0, members, 0, eps, C))
        part = Partition((0,), (1,)) if len(members) == 2 else Partition((0,), ())
        if in_theta3(theta, th0, members, 0, part, eps, C * factor, C * factor):
            assert in_theta3(theta, th0, members, 0, part, eps, C, C)


class TestTheta3:
    def setup_method(self):
        rng = np.random.default_rng(8)
        self.members = [np.sort(rng.uniform(0.3, 2.0, 5))[::-1] for _ in range(3)]
        self.th0 = rng.normal(size=5)
        self.eps = 0.4
        self.rng = rng

    def member(self, theta, j, C):
        return identifiability_gap(theta, self.th0, self.members[0], self.members[j]) >= C * separation_radius(
            self.members[j], self.eps
        )

    def test_empty_rest_is_union(self):
        for _ in range(50):
            theta = self.th0 + self.rng.normal(size=5)
            got = in_theta3(theta, self.th0, self.members, 0, Partition((0, 1, 2), ()), self.eps, 2.0, 9.0)
            assert got == any(self.member(theta, j, 2.0) for j in range(3))

    def test_empty_homogeneous_part_is_intersection(self):
        for _ in range(50):
            theta = self.th0 + self.rng.normal(size=5)
            got = in_theta3(theta, self.th0, self.members, 0, Partition((), (0, 1, 2)), self.eps, 2.0, 3.0)
            assert got == all(self.member(theta, j, 3.0) for j in range(3))

    def test_two_members_reduce_to_single_constraint(self):
        pair = self.members[:2]
        for _ in range(100):
            theta = self.th0 + self.rng.normal(size=5) * 2
            got = in_theta3(theta, self.th0, pair, 0, Partition((1,), (0,)), self.eps, 2.5, 1e-12)
            gap0 = identifiability_gap(theta, self.th0, pair[0], pair[0])
            expected = self.member(theta, 1, 2.5) and gap0 >= 1e-12 * separation_radius(pair[0], self.eps)
            assert got == expected

    def test_invalid_partition(self):
        with pytest.raises(ConfigurationError):
            in_theta3(self.th0, self.th0, self.members, 0, Partition((0,), (1,)), self.eps, 1.0, 1.0)


class TestAdversarialDraw:
    def test_zero_tau_is_pullback(self):
        th0, b, bb = np.array([1.0, -2.0]), np.array([1.0, 0.5]), np.array([0.9, 0.7])
        d = adversarial_draw(th0, b, bb, 0.3, A, B, 0.0, seed=1)
        np.testing.assert_array_equal(d.theta.values, bb * th0 / b)

    def test_single_coordinate_norm(self):
        d = adversarial_draw([0.0], [2.0], [2.0], 0.5, A, B, 0.6, seed=3)
        assert d.theta.squared_norm() == pytest.approx(0.36 * prior_radius_sq([2.0], 0.5, A, B), rel=1e-12)

    def test_identity_on_many_draws(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            th0, b, bb, eps = random_instance(rng, int(rng.integers(1, 30)))
            tau = float(rng.uniform(0.05, 1.0))
            target = tau**2 * math.sqrt(LN_CAB) * separation_radius(bb, eps)
            for k in range(100):
                d = adversarial_draw(th0, b, bb, eps, A, B, tau, seed=77, draw=k)
                assert identifiability_gap(d.theta, th0, b, bb) == pytest.approx(target, rel=1e-10)
                shift = b * d.theta.values - bb * th0
                expected = d.omega * tau * math.sqrt(d.config.R_squared) / bb / math.sqrt(np.sum(bb**-4.0))
                np.testing.assert_allclose(shift, expected, rtol=1e-10, atol=1e-12 * np.abs(bb * th0).max())

    def test_draw_lies_on_theta2_boundary(self):
        th0, b, bb = np.array([1.0, 0.5, -0.3]), np.array([1.0, 0.6, 0.2]), np.array([1.1, 0.5, 0.25])
        d = adversarial_draw(th0, b, bb, 0.2, A, B, 0.8, seed=9)
        c2 = d.config.c2_lower
        assert in_theta2(SeparationQuery(d.theta, th0, [b, bb], 0, 0.2, c2))
        assert not in_theta2(SeparationQuery(d.theta, th0, [b, bb], 0, 0.2, c2 * (1 + 1e-9)))

    def test_config_invariants(self):
        d = adversarial_draw([1.0], [1.0], [0.5], 0.3, A, B, 0.5, seed=0)
        assert d.config.R_squared == pytest.approx(math.sqrt(LN_CAB) * separation_radius([0.5], 0.3), rel=1e-15)
        with pytest.raises(DomainError):
            AdversaryConfig(0.6, 0.5, 0.5, 0.5, 1.0, 1.0)
        with pytest.raises(DomainError):
            AdversaryConfig(A, B, 1.5, 0.5, 1.0, 1.0)
        with pytest.raises(DomainError):
            AdversaryConfig(A, B, 0.5, 1.0, 1.0, 1.0)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            adversarial_draw([1.0], [1.0], [0.5], 0.3, 0.5, 0.5, 0.5, seed=0)
        with pytest.raises(DomainError):
            adversarial_draw([1.0], [1.0], [0.5], 0.3, A, B, 1.2, seed=0)
        with pytest.raises(DomainError):
            adversarial_draw([1.0], [1e-301], [0.5], 0.3, A, B, 0.5, seed=0)

    def test_reproducible(self):
        a = adversarial_draw([1.0, 2.0], [1.0, 0.5], [1.0, 0.4], 0.3, A, B, 0.5, seed=4, draw=2)
        b = adversarial_draw([1.0, 2.0], [1.0, 0.5], [1.0, 0.4], 0.3, A, B, 0.5, seed=4, draw=2)
        assert a.theta == b.theta


class TestSecondMoment:
    def test_zero_tau(self):
        assert lr_second_moment_closed([1.0, 2.0], [1.0, 0.5], 0.2, A, B, 0.0) == 1.0
        est = lr_second_moment_mc([1.0, 2.0], [1.2, 0.3], [1.0, 0.5], 0.2, A, B, 0.0, 500, 3)
        assert est.mean == pytest.approx(1.0, abs=1e-12) and est.se == pytest.approx(0.0, abs=1e-12)

    def test_single_factor(self):
        bb, eps, tau = 1.7, 0.4, 0.9
        R2 = prior_radius_sq([bb], eps, A, B)
        lam2 = tau**2 * R2 * bb**2 / eps**2
        assert lr_second_moment_closed([0.3], [bb], eps, A, B, tau) == pytest.approx(math.cosh(lam2), rel=1e-13)
        assert lr_second_moment_cosh_squared([0.3], [bb], eps, A, B, tau) == pytest.approx(
            math.cosh(lam2) ** 2, rel=1e-13
        )

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.floats(0.0, 1.0), st.integers(0, 10**6))
    def test_bounds_chain(self, m, tau, seed):
        rng = np.random.default_rng(seed)
        th0, _, bb, eps = random_instance(rng, m)
        closed = lr_second_moment_closed(th0, bb, eps, A, B, tau)
        assert closed == pytest.approx(brute_lr_second_moment(bb, eps, tau), rel=1e-12)
        assert closed <= lr_second_moment_cosh_squared(th0, bb, eps, A, B, tau) * (1 + 1e-12)
        bound = lr_second_moment_exp_bound(bb, eps, A, B, tau)
        assert closed <= bound * (1 + 1e-12)
        assert bound == pytest.approx(second_moment_cap(A, B) ** (tau**4), rel=1e-12)
        if tau <= 1:
            assert closed <= second_moment_cap(A, B) * (1 + 1e-12)

    def test_cap_below_c_ab_at_full_tau(self):
        for bb in ([1.0], [2.0, 1.0, 0.1], list(polynomial_spectrum(40, 1.0).values)):
            assert lr_second_moment_closed(np.zeros(len(bb)), bb, 0.3, A, B, 1.0) < second_moment_cap(A, B)

    def test_mc_matches_closed(self):
        th0, b, bb = np.array([0.5, -1.0, 0.2]), np.array([1.0, 0.7, 0.3]), np.array([1.2, 0.6, 0.35])
        closed = lr_second_moment_closed(th0, bb, 0.3, A, B, 0.7)
        est = lr_second_moment_mc(th0, b, bb, 0.3, A, B, 0.7, 20000, seed=2)
        assert est.inner == "exact"
        assert abs(est.mean - closed) < 4 * est.se

    def test_sign_symmetry(self):
        th0, b, bb = np.array([0.5, -1.0]), np.array([1.0, 0.7]), np.array([1.2, 0.6])
        a = lr_second_moment_mc(th0, b, bb, 0.3, A, B, 0.6, 4000, seed=5, inner="sampled", inner_draws=64)
        c = lr_second_moment_mc(th0, b, bb, 0.3, A, B, 0.6, 4000, seed=6, inner="sampled", inner_draws=64)
        assert abs(a.mean - c.mean) < 4 * math.hypot(a.se, c.se)

    def test_enumeration_cap(self):
        with pytest.raises(ResourceCapError):
            lr_second_moment_mc(np.zeros(21), np.ones(21), np.ones(21), 1.0, A, B, 0.5, 10, 0, inner="exact")

    def test_mc_domain(self):
        with pytest.raises(DomainError):
            lr_second_moment_mc([0.0], [1.0], [1.0], 1.0, A, B, 0.5, 0, 0)
        with pytest.raises(DomainError):
            lr_second_moment_mc([0.0], [1.0], [1.0], 1.0, A, B, 0.5, 10, 0, inner="bogus")


class TestFeasibility:
    def test_zero_tau(self):
        C1 = detection_constant(A, B)
        assert feasibility_certificate(C1 / 0.5 * 1.001, A, B, 0.0, 0.5).passed
        assert not feasibility_certificate(C1 / 0.5 * 0.999, A, B, 0.0, 0.5).passed

    def test_gamma_near_one_fails(self):
        assert not feasibility_certificate(1e6, A, B, 0.5, 1 - 1e-9).passed

    def test_rearrangement(self):
        C1 = detection_constant(A, B)
        edge = 2 * (C1 + 0.01 * math.sqrt(LN_CAB))
        assert feasibility_certificate(edge * (1 + 1e-9), A, B, 0.1, 0.5).passed
        assert not feasibility_certificate(edge * (1 - 1e-9), A, B, 0.1, 0.5).passed
        cert = feasibility_certificate(edge + 1.0, A, B, 0.1, 0.5)
        assert cert.margin == pytest.approx(0.5, rel=1e-9)

    @pytest.mark.parametrize(
        "args", [(1.0, A, B, 0.5, 0.0), (1.0, A, B, 0.5, 1.0), (1.0, A, B, 1.1, 0.5), (1.0, 0.5, 0.5, 0.5, 0.5)]
    )
    def test_domain(self, args):
        with pytest.raises(DomainError):
            feasibility_certificate(*args)

    def test_search(self):
        best = search_feasibility(60.0, A, B)
        assert best.passed and best.gamma == pytest.approx(0.05) and best.tau == pytest.approx(0.01)
        strongest = search_feasibility(60.0, A, B, objective="tau")
        assert strongest.passed and strongest.tau == pytest.approx(1.0)
        assert not search_feasibility(1.0, A, B).passed


def test_diagnostic_reports_three_quantities():
    out = separation_diagnostic([1.0, 0.0], [0.5, 0.5], [1.0, 0.5], [0.9, 0.6])
    assert set(out) == {"identifiability_gap", "distance_sq", "divergence"}
    assert out["distance_sq"] == 0.5
