from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import ConfigError, DepthBudgetExceeded, NoChainWithinDepth
from core.numbers import Gaussian
from models.function import ArcFunction, Sector, TreeFunction
from models.universality import RulerSequence, TargetFamily
from services.boundary_measure import measure_service
from services.operators import operator_service
from services.universality import universality_service
from tests.helpers import binary, homogeneous, preset, ray_operator
from tests.strategies import arc_functions

BINARY = binary(depth=8)
BINARY_Q = preset(BINARY, "forward_uniform")
BINARY_M = measure_service.arc_measure_from_Q(BINARY_Q)


def uniform_binary(depth):
    t = binary(depth=depth)
    q = preset(t, "forward_uniform")
    return q, measure_service.arc_measure_from_Q(q)


class TestRuler:
    def test_first_values(self):
        assert [RulerSequence.ell(k) for k in range(1, 9)] == [1, 2, 1, 3, 1, 2, 1, 4]
        assert [RulerSequence.r(k) for k in (1, 2, 4, 16)] == [1, 3, 7, 31]
        assert RulerSequence.r(0) == 0

    def test_powers_of_two(self):
        for n in range(21):
            assert RulerSequence.r(2**n) == 2 ** (n + 1) - 1
            for m in range(1, n + 1):
                assert RulerSequence.count(n, m) == 2 ** (n - m)

    def test_service_matches_sequence(self):
        assert [universality_service.ruler_ell(k) for k in (1, 2, 12)] == [1, 2, 3]
        assert universality_service.ruler_r(8) == 15

    def test_counts(self):
        assert universality_service.ruler_count(3, 1) == 4
        assert universality_service.ruler_count(3, 3) == 1

    @given(st.integers(1, 10), st.integers(1, 1023))
    def test_periodic(self, n, k):
        k = k % 2**n or 1
        assert RulerSequence.ell(k + 2**n) == RulerSequence.ell(k)

    def test_bad_indices(self):
        with pytest.raises(ValueError):
            RulerSequence.ell(0)
        with pytest.raises(ValueError):
            RulerSequence.count(2, 0)


class TestTargetFamily:
    def test_first_members(self):
        family = TargetFamily(tree=BINARY)
        values = [family.member(j).function(()) for j in (1, 2, 3, 4)]
        assert values == [Gaussian(0), Gaussian(1), Gaussian(-1), Gaussian(0, 1)]
        assert family.member(1).level == 1

    def test_enumerate_targets(self):
        member = universality_service.enumerate_targets(BINARY, BINARY_M, 4)
        assert member.j == 4
        assert member.generation == 0
        assert member.function(()) == Gaussian(0, 1)

    def test_locate_inverts_member(self):
        family = TargetFamily(tree=BINARY)
        for j in [1, 2, 9, 11, 200, 6570]:
            assert family.locate(family.member(j).function) == j

    def test_locate_finds_the_grid_level(self):
        family = TargetFamily(tree=BINARY)
        f = ArcFunction.from_arc_values(
            BINARY,
            2,
            {
                (0, 0): Gaussian(Fraction(1, 3)),
                (0, 1): Gaussian(0),
                (1, 0): Gaussian(Fraction(-1, 2)),
                (1, 1): Gaussian(0, 1),
            },
        )
        j = family.locate(f, max_level=3)
        assert j is not None
        member = family.member(j)
        assert member.level == 3
        assert member.function == f

    def test_locate_off_grid(self):
        family = TargetFamily(tree=BINARY)
        f = ArcFunction.constant(BINARY, Gaussian(Fraction(1, 7)))
        assert family.locate(f, max_level=3) is None


class TestDecayChains:
    def test_right_biased(self):
        q = operator_service.build_operator(
            BINARY, {"rows": {"b": {"forward": ["3/4", "1/4"]}}}
        )
        chain = universality_service.find_decay_chain(q, (), 3)
        assert chain == [(), (1,), (1, 1), (1, 1, 1)]

    def test_uniform_chain_descends_leftmost(self):
        chain = universality_service.find_decay_chain(BINARY_Q, (1,), 2)
        assert chain == [(1,), (1, 0), (1, 0, 0)]

    def test_ray_has_no_chain(self):
        with pytest.raises(NoChainWithinDepth):
            universality_service.find_decay_chain(ray_operator(BINARY), (), 1)

    def test_chain_length(self):
        with pytest.raises(ValueError):
            universality_service.find_decay_chain(BINARY_Q, (), 0)


class TestExtendMatching:
    def test_worked_example(self):
        q, m = uniform_binary(4)
        g = TreeFunction.constant(q.tree, Fraction(0))
        target = ArcFunction.from_arc_values(
            q.tree, 1, {(0,): Fraction(1), (1,): Fraction(0)}
        )
        result = universality_service.extend_matching(q, m, g, target, 3, radius=1)
        assert result.k == 2
        assert result.m_out == 3
        assert result.dist_nu == Fraction(1, 10)
        h = result.h
        assert (h(()), h((0,)), h((0, 0))) == (0, 0, -1)

    def test_constant_target_changes_nothing(self):
        q, m = uniform_binary(4)
        g = TreeFunction.constant(q.tree, Fraction(2))
        target = ArcFunction.constant(q.tree, Fraction(2))
        result = universality_service.extend_matching(q, m, g, target, 2, radius=1)
        assert result.h.root is Sector.leaf(Fraction(2))
        assert result.dist_nu == 0

    @settings(max_examples=100)
    @given(st.data())
    def test_random_instances(self, data):
        f = data.draw(arc_functions(BINARY, max_generation=3))
        g = measure_service.project_dagger(
            BINARY_M, data.draw(arc_functions(BINARY, max_generation=2))
        )
        n = data.draw(st.integers(0, 2))
        s = data.draw(st.integers(1, 8))
        result = universality_service.extend_matching(BINARY_Q, BINARY_M, g, f, s, radius=n)

        assert result.bound == Fraction(1, 2 ** (s.bit_length()))
        assert result.dist_nu <= result.bound
        for v in BINARY.ball(n):
            assert result.h(v) == g(v)
        assert operator_service.check_harmonic(BINARY_Q, result.h) == 0

    def test_needs_forward_only(self, degree3):
        t, q = degree3
        m = measure_service.arc_measure_from_Q(preset(t, "forward_uniform"))
        g = TreeFunction.constant(t, Fraction(0))
        with pytest.raises(ConfigError):
            universality_service.extend_matching(q, m, g, ArcFunction.constant(t, 0), 2)

    def test_s_positive(self):
        g = TreeFunction.constant(BINARY, Fraction(0))
        f = ArcFunction.constant(BINARY, Fraction(0))
        with pytest.raises(ValueError):
            universality_service.extend_matching(BINARY_Q, BINARY_M, g, f, 0)

    def test_no_admissible_generation(self):
        g = TreeFunction.constant(BINARY, Fraction(0))
        f = ArcFunction.constant(BINARY, Fraction(1))
        with pytest.raises(DepthBudgetExceeded):
            universality_service.extend_matching(
                BINARY_Q, BINARY_M, g, f, 4, radius=1, generations=(2,)
            )

    def test_ray_operator(self):
        q = ray_operator(BINARY)
        m = measure_service.arc_measure_from_Q(q)
        g = TreeFunction.constant(BINARY, Fraction(0))
        with pytest.raises(NoChainWithinDepth):
            universality_service.extend_matching(
                q, m, g, ArcFunction.constant(BINARY, Fraction(1)), 2
            )


class TestUniversalApproximant:
    def test_tolerance_and_visits(self):
        q, m = uniform_binary(12)
        g = TreeFunction.constant(q.tree, Gaussian(0))
        tol = Fraction(1, 1024)
        approx = universality_service.universal_approximant(
            q, m, g, tol, TargetFamily(tree=q.tree), 3
        )
        assert approx.radius == 3
        assert approx.distance.value + approx.distance.truncation_error < tol
        assert [v.target_j for v in approx.visits] == [1, 2, 3]
        assert all(v.dist_nu <= v.radius for v in approx.visits)

    def test_tolerance_needs_depth(self):
        q, m = uniform_binary(2)
        g = TreeFunction.constant(q.tree, Gaussian(0))
        with pytest.raises(DepthBudgetExceeded):
            universality_service.universal_approximant(
                q, m, g, Fraction(1, 2**20), TargetFamily(tree=q.tree), 1
            )


@pytest.fixture(scope="module")
def sixteen_steps():
    q, m = uniform_binary(33)
    seed = TreeFunction.constant(q.tree, Gaussian(0))
    targets = TargetFamily(tree=q.tree)
    h, certificate = universality_service.build_frequently_universal(q, m, seed, targets, 16)
    return h, certificate, m, targets


class TestFrequentlyUniversal:
    def test_binary_certificate(self, sixteen_steps):
        h, certificate, m, targets = sixteen_steps
        assert len(certificate.steps) == 16
        assert certificate.ok
        assert certificate.harmonic_residual == 0
        assert [s.generation for s in certificate.steps] == [
            RulerSequence.r(k) for k in range(1, 17)
        ]
        assert all(s.dist_nu < s.radius for s in certificate.steps)

        report = universality_service.visit_density(
            h, m, targets.member(1), Fraction(1, 2), 31, window=(31, 31)
        )
        assert {1, 4, 8, 11, 16, 19, 23, 26} <= set(report.visits)
        assert report.lower_density >= Fraction(8, 31)

    @pytest.mark.parametrize("level", [1, 2, 3, 4])
    def test_schedule_density(self, sixteen_steps, level):
        h, _, m, targets = sixteen_steps
        report = universality_service.visit_density(
            h, m, targets.member(level), Fraction(1, 2**level), 31, window=(31, 31)
        )
        assert report.lower_density >= Fraction(1, 2 ** (level + 1))

    def test_levels_form_a_martingale(self):
        q, m = uniform_binary(12)
        seed = TreeFunction.constant(q.tree, Fraction(0))
        h, _ = universality_service.build_frequently_universal(
            q, m, seed, TargetFamily(tree=q.tree), 4
        )
        check = measure_service.validate_martingale(m, measure_service.martingale_levels(m, h))
        assert check.ok

    def test_seed_is_preserved(self):
        q, m = uniform_binary(12)
        seed = TreeFunction.constant(q.tree, Gaussian(5))
        h, certificate = universality_service.build_frequently_universal(
            q, m, seed, TargetFamily(tree=q.tree), 4, radius=2
        )
        assert certificate.seed_preserved
        assert certificate.offset == 2
        assert all(h(v) == 5 for v in q.tree.ball(2))

    def test_schedule_must_fit(self):
        q, m = uniform_binary(6)
        seed = TreeFunction.constant(q.tree, Gaussian(0))
        with pytest.raises(DepthBudgetExceeded):
            universality_service.build_frequently_universal(
                q, m, seed, TargetFamily(tree=q.tree), 4
            )

    def test_ray_cannot_be_universal(self):
        t = binary(depth=12)
        q = ray_operator(t)
        m = measure_service.arc_measure_from_Q(q)
        seed = TreeFunction.constant(t, Gaussian(0))
        with pytest.raises(NoChainWithinDepth):
            universality_service.build_frequently_universal(
                q, m, seed, TargetFamily(tree=t), 2
            )


class TestAudits:
    def test_far_from_center(self):
        h = TreeFunction.constant(BINARY, Fraction(0))
        f = ArcFunction.constant(BINARY, Gaussian(1))
        report = universality_service.visit_density(h, BINARY_M, f, Fraction(1, 4), 6)
        assert report.visits == []
        assert report.lower_density == 0
        assert report.window == (3, 6)

    def test_window_bounds(self):
        h = TreeFunction.constant(BINARY, Fraction(0))
        f = ArcFunction.constant(BINARY, Fraction(0))
        with pytest.raises(ValueError):
            universality_service.visit_density(h, BINARY_M, f, Fraction(1, 4), 6, window=(0, 6))

    def test_disjoint_balls_are_not_visited_together(self):
        q, m = uniform_binary(12)
        targets = TargetFamily(tree=q.tree)
        h, _ = universality_service.build_frequently_universal(
            q, m, TreeFunction.constant(q.tree, Gaussian(0)), targets, 4
        )
        audit = universality_service.disjointness_audit(
            h, m, [targets.member(2), targets.member(3)], [Fraction(1, 4)] * 2, 7
        )
        assert audit.ok
        assert audit.pairs[0]["balls_disjoint"]
        assert audit.pairs[0]["target_i"] == 2

    def test_one_radius_per_center(self):
        h = TreeFunction.constant(BINARY, Fraction(0))
        with pytest.raises(ValueError):
            universality_service.disjointness_audit(
                h, BINARY_M, [ArcFunction.constant(BINARY, 0)], [], 4
            )


@pytest.fixture(scope="module")
def isotropic():
    p = preset(homogeneous(2, depth=8), "isotropic")
    return p, operator_service.descent_probabilities(p)


class TestTransfer:
    def test_companion_shares(self, isotropic):
        p, table = isotropic
        companion = universality_service.companion_operator(p, table)
        m = companion.measure
        assert m.exact
        assert companion.q.is_forward_only
        assert m.child_shares(m.tree.cone_at(())) == (Fraction(1, 3),) * 3
        assert m.child_shares(m.tree.cone_at((0, 1))) == (Fraction(1, 2),) * 2
        assert companion.share_error < 1e-9

    def test_forward_only_is_its_own_companion(self):
        companion = universality_service.companion_operator(BINARY_Q)
        assert companion.q is BINARY_Q
        assert companion.share_error == 0

    def test_transfer_is_harmonic(self, isotropic):
        p, table = isotropic
        companion = universality_service.companion_operator(p, table)
        seed = TreeFunction.constant(p.tree, Gaussian(0))
        result = universality_service.transfer_frequently_universal(
            p,
            seed,
            TargetFamily(tree=companion.measure.tree),
            3,
            table=table,
            companion=companion,
        )
        assert result.certificate.ok
        assert result.generation == RulerSequence.r(3)
        assert result.harmonic_residual <= 1e-8
        assert operator_service.check_harmonic(p, result.h) <= 1e-8
        assert result.root_gap <= 1e-8
        assert result.seed_gap <= 1e-8
        assert result.ok

    def test_approximant_stays_forward_only(self, isotropic):
        p, table = isotropic
        m = operator_service.hitting_distribution(p, table)
        with pytest.raises(ConfigError):
            universality_service.universal_approximant(
                p, m, TreeFunction.constant(p.tree, 0), Fraction(1, 4), TargetFamily(tree=m.tree), 1
            )
