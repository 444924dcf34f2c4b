from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import ConfigError, NotStochastic, NotTransient, SingularSystem
from core.numbers import Gaussian
from models.function import ArcFunction, TreeFunction
from services.operators import operator_service
from tests.helpers import automaton, binary, homogeneous, preset, ray_operator
from tests.strategies import contours, small_fractions, transient_operators, very_regular_operators


class TestBuildOperator:
    def test_isotropic_rows(self, degree3):
        t, q = degree3
        assert q.kind == "nearest_neighbor"
        assert q.row("b").back == Fraction(1, 3)
        assert q.row_at(()).forward == (Fraction(1, 3),) * 3
        assert q.coeff((0,), ()) == Fraction(1, 3)
        assert q.coeff((0,), (1,)) == 0
        assert q.is_positive()

    def test_forward_uniform(self, binary_tree):
        q = preset(binary_tree, "forward_uniform")
        assert q.is_forward_only
        assert q.exact

    def test_row_length(self, binary_tree):
        with pytest.raises(ConfigError):
            operator_service.build_operator(binary_tree, {"rows": {"b": {"forward": [1]}}})

    def test_row_sum(self, binary_tree):
        with pytest.raises(NotStochastic):
            operator_service.build_operator(
                binary_tree, {"rows": {"b": {"forward": ["1/2", "1/3"]}}}
            )

    def test_unknown_type(self, binary_tree):
        with pytest.raises(ConfigError):
            operator_service.build_operator(
                binary_tree, {"preset": "forward_uniform", "rows": {"z": {"forward": []}}}
            )

    def test_missing_row(self):
        t = automaton({"a": ["b"], "b": ["b", "b"]}, "a", 3)
        with pytest.raises(ConfigError):
            operator_service.build_operator(t, {"rows": {"a": {"forward": [1]}}})

    def test_root_type_needs_root_row(self, binary_tree):
        rows = {"b": {"back": "1/3", "forward": ["1/3", "1/3"]}}
        with pytest.raises(ConfigError):
            operator_service.build_operator(binary_tree, {"rows": rows})

    def test_malformed_document(self, binary_tree):
        with pytest.raises(ConfigError):
            operator_service.build_operator(binary_tree, {"preset": "lazy"})


class TestFirstPassage:
    @pytest.mark.parametrize("q", [2, 3, 4])
    def test_isotropic_descent(self, q):
        t = homogeneous(q, depth=4)
        op = preset(t, "isotropic")
        table = operator_service.descent_probabilities(op)
        assert table.descent["b"] == pytest.approx(1 / q, abs=1e-10)

    @pytest.mark.parametrize("q", [2, 3, 4])
    def test_isotropic_hitting_masses(self, q):
        t = homogeneous(q, depth=4)
        op = preset(t, "isotropic")
        table = operator_service.descent_probabilities(op)
        m = operator_service.hitting_distribution(op, table, 1)
        for v in t.circle(1):
            assert m.mass(v) == pytest.approx(1 / (q + 1), abs=1e-10)

    def test_forward_only_table_is_exact(self, binary_tree):
        q = preset(binary_tree, "forward_uniform")
        table = operator_service.descent_probabilities(q)
        assert table.descent == {"b": Fraction(0)}
        assert operator_service.first_passage(q, table, (), (0, 1)) == Fraction(1, 4)
        assert operator_service.first_passage(q, table, (0,), (1,)) == 0

    def test_passages_on_degree3(self, degree3):
        t, q = degree3
        table = operator_service.descent_probabilities(q)
        assert operator_service.ascent(q, table, (0,)) == pytest.approx(0.5)
        assert operator_service.first_passage(q, table, (0,), ()) == pytest.approx(0.5)
        assert operator_service.first_passage(q, table, (0,), (1,)) == pytest.approx(0.25)
        path = operator_service.ascent_path(q, table, (0, 1))
        assert operator_service.first_passage(q, table, (), (0, 1)) == pytest.approx(
            path[0] * path[1]
        )

    def test_recurrent_walk(self):
        t = automaton({"a": ["a", "a"]}, "a", 4)
        op = operator_service.build_operator(
            t,
            {
                "rows": {"a": {"back": 1, "forward": [0, 0]}},
                "root": {"forward": ["1/2", "1/2"]},
            },
        )
        with pytest.raises(NotTransient):
            operator_service.descent_probabilities(op)


class TestKernels:
    def test_kernel_normalization(self, degree3):
        t, q = degree3
        table = operator_service.descent_probabilities(q)
        m = operator_service.hitting_distribution(q, table, 2)
        for v in [(), (0,), (2, 1)]:
            norm = operator_service.kernel_normalization(q, table, v, m)
            assert norm == pytest.approx(1, abs=1e-10)

    @settings(max_examples=25)
    @given(transient_operators(max_depth=4))
    def test_normalization_over_the_ball(self, op):
        table = operator_service.descent_probabilities(op)
        m = operator_service.hitting_distribution(op, table, op.tree.depth)
        for v in op.tree.ball(min(4, op.tree.depth)):
            norm = operator_service.kernel_normalization(op, table, v, m)
            assert norm == pytest.approx(1, abs=1e-9)

    def test_poisson_kernel(self, degree3):
        _, q = degree3
        table = operator_service.descent_probabilities(q)
        assert operator_service.poisson_kernel(q, table, ())(()) == 1
        k = operator_service.poisson_kernel(q, table, (0,))
        assert k((0,)) == pytest.approx(2)
        assert k((1,)) == pytest.approx(0.5)
        assert k((2,)) == pytest.approx(0.5)

    def test_kernel_ratio_at_root(self, degree3):
        _, q = degree3
        table = operator_service.descent_probabilities(q)
        assert operator_service.hitting_kernel_ratio(q, table, ()) == 1

    @given(st.data())
    def test_poisson_transform_of_one(self, data):
        op = data.draw(transient_operators(max_depth=4))
        table = operator_service.descent_probabilities(op)
        n = data.draw(st.integers(0, min(2, op.tree.depth)))
        one = ArcFunction.constant(op.tree, Fraction(1), generation=n)
        h = operator_service.poisson_transform(op, table, one)
        for v in op.tree.ball(n):
            assert h(v) == pytest.approx(1, abs=1e-10)

    @given(st.data())
    def test_transform_is_harmonic(self, data):
        op = data.draw(transient_operators(max_depth=4))
        table = operator_service.descent_probabilities(op)
        t = op.tree
        n = data.draw(st.integers(1, min(3, t.depth)))
        values = {u: data.draw(small_fractions) for u in t.frontier(n)}
        f = ArcFunction.from_arc_values(t, n, values)
        h = operator_service.poisson_transform(op, table, f)
        assert operator_service.check_harmonic(op, h) <= 1e-9

    def test_transform_of_one_arc(self, degree3):
        t, q = degree3
        table = operator_service.descent_probabilities(q)
        f = ArcFunction.from_arc_values(
            t, 1, {(0,): Fraction(1), (1,): Fraction(0), (2,): Fraction(0)}
        )
        h = operator_service.poisson_transform(q, table, f)
        assert h(()) == pytest.approx(1 / 3)
        assert h((0,)) == pytest.approx(2 / 3)
        assert h((1,)) == pytest.approx(1 / 6)
        assert operator_service.check_harmonic(q, h) <= 1e-9

    def test_forward_transform_is_exact(self, binary_uniform):
        q, _ = binary_uniform
        table = operator_service.descent_probabilities(q)
        f = ArcFunction.from_arc_values(q.tree, 1, {(0,): Fraction(1), (1,): Fraction(0)})
        h = operator_service.poisson_transform(q, table, f)
        assert h(()) == Fraction(1, 2)
        assert operator_service.check_harmonic(q, h) == 0


class TestVeryRegular:
    def test_degree3(self, degree3):
        _, q = degree3
        report = operator_service.check_regularity(q, "very_regular")
        assert report.is_member
        assert report.delta == Fraction(1, 6)
        assert report.epsilon == Fraction(1, 2)
        assert report.witness == "b"
        assert report.ascent_certified

    def test_forward_only_is_not_very_regular(self, binary_tree):
        q = preset(binary_tree, "forward_uniform")
        report = operator_service.check_regularity(q, "very_regular")
        assert not report.is_member
        assert report.epsilon is None

    @given(very_regular_operators())
    def test_passage_bounds(self, sample):
        op, delta = sample
        report = operator_service.check_regularity(op, "very_regular")
        assert report.is_member
        assert report.delta >= delta

        bound = 1 - 4 * delta / (1 + 2 * delta) + Fraction(1, 10**12)
        table = operator_service.descent_probabilities(op)
        worst, _ = operator_service.max_descent(op, table)
        assert worst <= bound
        best, _ = operator_service.max_ascent(op, table)
        assert best <= bound

        for v in op.tree.frontier(min(2, op.tree.depth)):
            assert operator_service.hitting_kernel_ratio(op, table, v) <= 1 + 1e-12

    def test_unknown_mode(self, degree3):
        _, q = degree3
        with pytest.raises(ConfigError):
            operator_service.check_regularity(q, "strong")


class TestProductDecay:
    def test_uniform_binary(self, binary_tree):
        report = operator_service.check_regularity(
            preset(binary_tree, "forward_uniform"), "product_decay"
        )
        assert report.is_member

    def test_ray(self, binary_tree):
        report = operator_service.check_regularity(ray_operator(binary_tree), "product_decay")
        assert not report.is_member

    def test_isotropic(self, degree3):
        _, q = degree3
        assert operator_service.check_regularity(q, "product_decay").is_member


class TestDirichlet:
    def test_circle_contour(self, degree3):
        t, q = degree3
        contour = operator_service.circle_contour(t, 1)
        values = {(0,): Fraction(1), (1,): Fraction(0), (2,): Fraction(0)}
        h = operator_service.solve_dirichlet(q, contour, values)
        assert h(()) == pytest.approx(1 / 3)
        assert operator_service.contour_summation(q, contour, values) == Fraction(1, 3)

    def test_contour_must_enclose(self, binary_tree):
        with pytest.raises(SingularSystem):
            operator_service.make_contour(binary_tree, [(0,)])

    def test_contour_without_root(self, binary_tree):
        with pytest.raises(SingularSystem):
            operator_service.make_contour(binary_tree, [()])

    def test_adjacent_contour(self, binary_tree):
        with pytest.raises(SingularSystem):
            operator_service.make_contour(binary_tree, [(0,), (0, 0), (0, 1), (1,)])

    def test_circle_depth_range(self, binary_tree):
        with pytest.raises(ConfigError):
            operator_service.circle_contour(binary_tree, 0)

    def test_missing_boundary_value(self, degree3):
        t, q = degree3
        contour = operator_service.circle_contour(t, 1)
        with pytest.raises(ConfigError):
            operator_service.solve_dirichlet(q, contour, {(0,): Fraction(1)})

    @given(st.data())
    def test_solve_matches_summation(self, data):
        op = data.draw(transient_operators(max_depth=5))
        t = op.tree
        contour = operator_service.make_contour(t, data.draw(contours(t)))
        values = {v: data.draw(small_fractions) for v in sorted(contour.vertices)}
        h = operator_service.solve_dirichlet(op, contour, values)

        summed = operator_service.contour_summation(op, contour, values)
        assert h(()) == pytest.approx(float(summed), abs=1e-9)

        top = max(values.values())
        assert all(h(v) <= top + 1e-9 for v in contour.interior)
        assert operator_service.check_harmonic(op, h, region=contour.interior) <= 1e-9

    def test_constant_data_gives_constant(self, degree3):
        t, q = degree3
        contour = operator_service.circle_contour(t, 2)
        h = operator_service.solve_dirichlet(
            q, contour, {v: Fraction(2) for v in contour.vertices}
        )
        assert isinstance(h, TreeFunction)
        for v in contour.interior:
            assert h(v) == pytest.approx(2)

    def test_complex_data(self, degree3):
        t, q = degree3
        contour = operator_service.circle_contour(t, 1)
        values = {v: Gaussian(0, 1) for v in contour.vertices}
        h = operator_service.solve_dirichlet(q, contour, values)
        assert h(()) == pytest.approx(1j)


class TestHarmonicResidual:
    def test_detects_a_bump_at_the_root(self):
        t = binary(depth=3)
        q = preset(t, "forward_uniform")
        f = TreeFunction.from_mapping(t, {(): Fraction(1), (0,): Fraction(0), (1,): Fraction(0)})
        assert operator_service.check_harmonic(q, f) == 1
