from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import ConfigError, MissingValue, NotStochastic, ZeroMassArc
from core.numbers import Gaussian
from models.function import ArcFunction, TreeFunction
from models.measure import ArcMeasure, BoundaryMartingale
from services.boundary_measure import measure_service
from services.operators import operator_service
from tests.helpers import automaton, binary, homogeneous, preset
from tests.strategies import arc_functions, forward_operators


def _ball_values(h, depth):
    return {v: h(v) for v in h.tree.ball(depth)}


class TestMartingaleAlgebra:
    @given(st.data())
    def test_projections_compose(self, data):
        q = data.draw(forward_operators())
        m = measure_service.arc_measure_from_Q(q)
        f = data.draw(arc_functions(q.tree))
        top = min(q.tree.depth, 4)
        a = data.draw(st.integers(0, top))
        b = data.draw(st.integers(0, top))
        twice = measure_service.project_pi(m, measure_service.project_pi(m, f, a), b)
        once = measure_service.project_pi(m, f, min(a, b))
        assert twice.root is once.root

    @given(forward_operators())
    def test_operator_measure_round_trip(self, q):
        m = measure_service.arc_measure_from_Q(q)
        back = measure_service.Q_from_arc_measure(m)
        assert back.rows == q.rows
        assert back.root_row == q.root_row
        assert measure_service.arc_measure_from_Q(back).shares == m.shares

    @given(st.data())
    def test_lift_then_average_is_identity(self, data):
        q = data.draw(forward_operators())
        m = measure_service.arc_measure_from_Q(q)
        h = measure_service.project_dagger(m, data.draw(arc_functions(q.tree)))
        n = data.draw(st.integers(0, min(q.tree.depth, 4)))
        again = measure_service.project_dagger(m, measure_service.lift(h, n))
        assert _ball_values(again, n) == _ball_values(h, n)

    @given(st.data())
    def test_averages_are_harmonic(self, data):
        q = data.draw(forward_operators())
        m = measure_service.arc_measure_from_Q(q)
        h = measure_service.project_dagger(m, data.draw(arc_functions(q.tree)))
        assert operator_service.check_harmonic(q, h) == 0

    @given(st.data())
    def test_levels_form_a_martingale(self, data):
        q = data.draw(forward_operators(max_depth=6))
        m = measure_service.arc_measure_from_Q(q)
        h = measure_service.project_dagger(m, data.draw(arc_functions(q.tree)))
        levels = measure_service.martingale_levels(m, h)
        assert len(levels.levels) == q.tree.depth + 1
        assert measure_service.validate_martingale(m, levels).ok


class TestMeasures:
    def test_uniform_masses(self, binary_uniform):
        _, m = binary_uniform
        assert m.mass((0, 1)) == Fraction(1, 4)
        masses = m.masses(2)
        assert sum(masses[v] for v in m.tree.circle(2)) == 1

    def test_from_masses(self):
        t = binary(depth=2)
        masses = {
            "o": 1, "o/0": "1/2", "o/1": "1/2",
            "o/0/0": "1/4", "o/0/1": "1/4", "o/1/0": "1/2", "o/1/1": 0,
        }
        m = measure_service.build_measure(t, {"masses": masses})
        assert m.tree.explicit
        assert m.mass((1, 0)) == Fraction(1, 2)
        assert m.mass((1, 1)) == 0

    def test_masses_not_additive(self):
        t = binary(depth=1)
        with pytest.raises(ConfigError):
            measure_service.build_measure(t, {"masses": {"o": 1, "o/0": "1/2", "o/1": "1/3"}})

    def test_masses_missing(self):
        t = binary(depth=1)
        with pytest.raises(MissingValue):
            measure_service.build_measure(t, {"masses": {"o": 1, "o/0": "1/2"}})

    def test_root_mass(self):
        t = binary(depth=1)
        with pytest.raises(ConfigError):
            measure_service.build_measure(t, {"masses": {"o": "1/2", "o/0": 0, "o/1": "1/2"}})

    def test_from_shares(self):
        t = binary(depth=3)
        m = measure_service.build_measure(t, {"shares": {"b": ["1/3", "2/3"]}})
        assert m.mass((1, 1)) == Fraction(4, 9)

    def test_share_count(self):
        with pytest.raises(ConfigError):
            measure_service.build_measure(binary(), {"shares": {"b": [1]}})

    def test_shares_not_stochastic(self):
        with pytest.raises(NotStochastic):
            measure_service.build_measure(binary(), {"shares": {"b": ["1/2", "1/3"]}})

    def test_needs_a_source(self, degree3):
        t, q = degree3
        with pytest.raises(ConfigError):
            measure_service.build_measure(t, None, q)

    def test_nearest_neighbour_has_no_forward_measure(self, degree3):
        _, q = degree3
        with pytest.raises(ConfigError):
            measure_service.arc_measure_from_Q(q)


class TestZeroMass:
    def test_operator_needs_positive_shares(self):
        t = binary(depth=3)
        m = ArcMeasure(tree=t, shares={"b": (Fraction(1), Fraction(0))})
        with pytest.raises(ZeroMassArc):
            measure_service.Q_from_arc_measure(m)

    def test_prune_drops_dead_types(self):
        t = automaton({"r": ["a", "b"], "a": ["a", "a"], "b": ["b", "b"]}, "r", 4)
        half = (Fraction(1, 2), Fraction(1, 2))
        m = ArcMeasure(
            tree=t, shares={"r": (Fraction(1), Fraction(0)), "a": half, "b": half}
        )
        pruned = measure_service.prune(m)
        assert "b" not in pruned.tree.automaton.types
        assert pruned.tree.circle_size(2) == 2
        q = measure_service.Q_from_arc_measure(pruned)
        assert q.row("r").forward == (Fraction(1),)

    def test_average_over_null_arc(self):
        t = binary(depth=3)
        m = ArcMeasure(tree=t, shares={"b": (Fraction(1), Fraction(0))})
        f = ArcFunction.from_arc_values(
            t, 2, {(0,): Fraction(0), (1, 0): Fraction(1), (1, 1): Fraction(0)}
        )
        with pytest.raises(ZeroMassArc):
            measure_service.project_dagger(m, f)


class TestDistNu:
    def test_half_the_boundary(self, binary_uniform):
        _, m = binary_uniform
        f = ArcFunction.from_arc_values(m.tree, 1, {(0,): Fraction(1), (1,): Fraction(0)})
        g = ArcFunction.constant(m.tree, Fraction(0))
        assert measure_service.dist_nu(m, f, g) == Fraction(1, 4)
        assert measure_service.dist_nu(m, f, f) == 0

    def test_averages(self, binary_uniform):
        _, m = binary_uniform
        f = ArcFunction.from_arc_values(m.tree, 1, {(0,): Fraction(1), (1,): Fraction(0)})
        h = measure_service.project_dagger(m, f)
        assert h(()) == Fraction(1, 2)
        assert h((0, 1)) == 1

    @given(st.data())
    def test_bounded_by_the_mismatch_mass(self, data):
        q = data.draw(forward_operators(max_depth=4))
        m = measure_service.arc_measure_from_Q(q)
        t = m.tree
        f = data.draw(arc_functions(t))
        g = data.draw(arc_functions(t))
        n = max(f.generation, g.generation)
        f, g = f.at_generation(n), g.at_generation(n)
        apart = sum(m.mass(u) for u in t.frontier(n) if f.value(u) != g.value(u))
        dist = measure_service.dist_nu(m, f, g)
        if apart == 0:
            assert dist == 0
        else:
            assert 0 < dist < apart


class TestValidateMartingale:
    def test_violation_is_located(self, binary_uniform):
        _, m = binary_uniform
        t = m.tree
        levels = [
            ArcFunction.constant(t, Fraction(0)),
            ArcFunction.from_arc_values(t, 1, {(0,): Fraction(1), (1,): Fraction(0)}),
        ]
        check = measure_service.validate_martingale(m, BoundaryMartingale(levels=levels))
        assert not check.ok
        assert check.level == 0
        assert check.vertex == "o"
        assert check.found == "1/2"

    def test_hitting_levels_on_isotropic_tree(self):
        t = homogeneous(2, depth=3)
        q = preset(t, "forward_uniform")
        m = measure_service.arc_measure_from_Q(q)
        f = ArcFunction.from_arc_values(
            t, 1, {(0,): Fraction(3), (1,): Fraction(0), (2,): Fraction(0)}
        )
        h = measure_service.project_dagger(m, f)
        assert h(()) == 1
        levels = measure_service.martingale_levels(m, h, depth=2)
        assert measure_service.validate_martingale(m, levels).ok

    def test_integer_values(self):
        t = binary(depth=2)
        m = measure_service.arc_measure_from_Q(preset(t, "forward_uniform"))
        h = TreeFunction.from_mapping(t, {(): 1, (0,): 0, (1,): 2})
        check = measure_service.validate_martingale(
            m, measure_service.martingale_levels(m, h, depth=1)
        )
        assert check.ok

    def test_mixed_exact_types(self):
        t = binary(depth=2)
        m = measure_service.arc_measure_from_Q(preset(t, "forward_uniform"))
        h = TreeFunction.from_mapping(t, {(): Gaussian(1), (0,): Fraction(0), (1,): 2})
        assert measure_service.validate_martingale(
            m, measure_service.martingale_levels(m, h, depth=1)
        ).ok

    def test_float_levels_within_tolerance(self, degree3):
        _, q = degree3
        table = operator_service.descent_probabilities(q)
        m = operator_service.hitting_distribution(q, table, 2)
        f = ArcFunction.from_arc_values(
            m.tree, 1, {(0,): Fraction(3), (1,): Fraction(0), (2,): Fraction(0)}
        )
        h = measure_service.project_dagger(m, f)
        assert h(()) == pytest.approx(1)
        assert measure_service.validate_martingale(
            m, measure_service.martingale_levels(m, h, depth=2)
        ).ok
