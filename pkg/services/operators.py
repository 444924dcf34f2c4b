import logging
import warnings
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional

import networkx as nx
import numpy as np
from pydantic import ValidationError
from scipy.sparse import csr_matrix, lil_matrix
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from config import get_settings
from core.errors import (
    ConfigError,
    NoConvergence,
    NotStochastic,
    NotTransient,
    SingularSystem,
    ZeroMassArc,
)
from core.numbers import modulus, to_float, weighted
from models.function import ArcFunction, Sector, TreeFunction
from models.measure import ArcMeasure
from models.operator import (
    Contour,
    FirstPassageTable,
    RegularityReport,
    Row,
    Scalar,
    TransitionOperator,
)
from models.scene import OperatorSpec, RowSpec
from models.tree import ROOT_CONE, Tree, Vertex
from services.boundary_measure import measure_service
from services.tree_core import tree_service

logger = logging.getLogger(__name__)


class OperatorService:
    """Transition operators and the potential theory built on them."""

    # --- construction ------------------------------------------------------

    def build_operator(self, t: Tree, doc: OperatorSpec | dict[str, Any]) -> TransitionOperator:
        if not isinstance(doc, OperatorSpec):
            try:
                doc = OperatorSpec.model_validate(doc)
            except ValidationError as e:
                raise ConfigError("invalid operator document", {"detail": str(e)}) from e

        types = t.automaton.types
        rows: dict[str, Row] = {}
        root_row: Optional[Row] = None
        if doc.preset == "isotropic":
            rows, root_row = self._isotropic(t)
        elif doc.preset == "forward_uniform":
            rows = self._forward_uniform(t)

        for name, spec in doc.rows.items():
            if name not in types:
                raise ConfigError("row for an unknown type", {"type": name})
            rows[name] = self._row(spec)
        if doc.root is not None:
            root_row = self._row(doc.root)

        missing = [name for name in types if name not in rows]
        if missing:
            raise ConfigError("no transition row for type", {"type": missing[0]})

        root_type = t.automaton.root_type
        if root_row is None and rows[root_type].back != 0:
            raise ConfigError(
                "the root type has a backward coefficient; give a root row",
                {"type": root_type},
            )
        op = TransitionOperator(tree=t, rows=rows, root_row=root_row)
        self.validate(op)
        logger.info("built %s operator on %d types", op.kind, len(rows))
        return op

    def _row(self, spec: RowSpec) -> Row:
        return Row(back=spec.back, forward=tuple(spec.forward))

    def _isotropic(self, t: Tree) -> tuple[dict[str, Row], Optional[Row]]:
        rows = {}
        for name, kids in t.automaton.types.items():
            share = Fraction(1, len(kids) + 1)
            rows[name] = Row(back=share, forward=tuple(share for _ in kids))
        kids = t.automaton.types[t.automaton.root_type]
        root = Row(forward=tuple(Fraction(1, len(kids)) for _ in kids)) if kids else Row()
        return rows, root

    def _forward_uniform(self, t: Tree) -> dict[str, Row]:
        return {
            name: Row(forward=tuple(Fraction(1, len(kids)) for _ in kids))
            for name, kids in t.automaton.types.items()
        }

    def validate(self, op: TransitionOperator) -> None:
        """Row-stochastic on non-terminal vertices, coefficients in [0, 1]."""
        tol = get_settings().additivity_tol
        for cone in op.cones():
            row = op.row(cone)
            kids = op.tree.child_cones(cone)
            if len(row.forward) != len(kids):
                raise ConfigError(
                    "row length does not match the number of children",
                    {"type": cone, "children": len(kids), "coefficients": len(row.forward)},
                )
            if any(c < 0 or c > 1 for c in row.coefficients()):
                raise NotStochastic("coefficient outside [0, 1]", {"type": cone})
            if not kids:
                continue
            total = row.total()
            exact = all(isinstance(c, Fraction) for c in row.coefficients())
            if (exact and total != 1) or (not exact and abs(total - 1) > tol):
                raise NotStochastic("row does not sum to 1", {"type": cone, "sum": total})

    # --- harmonicity -------------------------------------------------------

    def check_harmonic(
        self,
        op: TransitionOperator,
        f: TreeFunction,
        region: Optional[Iterable[Vertex]] = None,
        depth: Optional[int] = None,
    ) -> Scalar:
        """Max |Pf - f| over the region (default: all of B_{depth-1}).

        Terminal vertices are skipped. Without an explicit region the sweep runs
        over the sector DAG and never enumerates vertices.
        """
        bits = get_settings().modulus_bits
        if region is not None:
            worst: Scalar = Fraction(0)
            for x in region:
                row = op.row_at(x)
                if not row.forward:
                    continue
                value: Any = -f(x)
                if x:
                    value = value + weighted(row.back, f(x[:-1]))
                for i, c in enumerate(row.forward):
                    value = value + weighted(c, f(x + (i,)))
                worst = max(worst, modulus(value, bits))
            return worst

        if depth is None:
            depth = f.defined_to if f.defined_to is not None else op.tree.depth
        t = op.tree
        memo: dict[tuple, Scalar] = {}

        def sweep(cone: str, node: Sector, father: Any, r: int) -> Scalar:
            # r: number of levels still to check, this one included
            if r <= 0:
                return Fraction(0)
            kids = t.child_cones(cone)
            if not kids:
                return Fraction(0)
            if node.is_leaf and (father is None or father == node.value):
                return Fraction(0)
            key = (cone, node, father, r)
            cached = memo.get(key)
            if cached is not None:
                return cached
            row = op.row(cone)
            value: Any = -node.value
            if father is not None:
                value = value + weighted(row.back, father)
            for i, c in enumerate(row.forward):
                value = value + weighted(c, node.child(i).value)
            worst = modulus(value, bits)
            for i, kid in enumerate(kids):
                worst = max(worst, sweep(kid, node.child(i), node.value, r - 1))
            memo[key] = worst
            return worst

        return sweep(ROOT_CONE, f.root, None, depth)

    # --- first passage -----------------------------------------------------

    def descent_probabilities(self, op: TransitionOperator) -> FirstPassageTable:
        """U(v, v_-) per cone type: minimal solution of the first-passage system."""
        t = op.tree
        if op.is_forward_only:
            return FirstPassageTable(descent={name: Fraction(0) for name in op.rows})

        settings = get_settings()
        names = list(op.rows)
        index = {name: i for i, name in enumerate(names)}
        back = np.zeros(len(names))
        forward = lil_matrix((len(names), len(names)))
        absorbing = np.zeros(len(names), dtype=bool)
        for name, row in op.rows.items():
            i = index[name]
            back[i] = float(row.back)
            for child, c in zip(t.automaton.types[name], row.forward):
                forward[i, index[child]] += float(c)
            if t.explicit and not t.automaton.types[name] and len(t.vertex(name)) == t.depth:
                absorbing[i] = True
        back[absorbing] = 0.0
        forward = csr_matrix(forward)

        x = np.zeros(len(names))
        residual = np.inf
        for iteration in range(1, settings.fixed_point_max_iter + 1):
            denom = 1.0 - forward @ x
            if np.any(denom <= settings.transience_margin):
                raise NotTransient("first-passage system degenerates", {"iteration": iteration})
            nxt = back / denom
            residual = float(np.max(np.abs(nxt - x))) if len(x) else 0.0
            x = nxt
            if residual <= settings.fixed_point_tol:
                break
        else:
            raise NoConvergence(
                "first-passage iteration did not converge",
                {"residual": residual, "max_iter": settings.fixed_point_max_iter},
            )

        root = op.row(ROOT_CONE)
        kids = t.child_cones(ROOT_CONE)
        returning = sum(float(c) * x[index[k]] for k, c in zip(kids, root.forward))
        if returning >= 1 - settings.transience_margin:
            raise NotTransient("walk returns to the root almost surely", {"return": returning})

        logger.info("descent solved in %d iterations (residual %.3g)", iteration, residual)
        return FirstPassageTable(
            descent={name: float(x[index[name]]) for name in names},
            residual=residual,
            iterations=iteration,
            truncation_dependent=bool(absorbing.any()),
        )

    def ascent_path(
        self, op: TransitionOperator, table: FirstPassageTable, v: Vertex
    ) -> list[Scalar]:
        """U(v_{j-1}, v_j) for j = 1..|v| along [o, v]."""
        t = op.tree
        out: list[Scalar] = []
        up: Optional[Scalar] = None
        for j in range(len(v)):
            u = v[:j]
            row = op.row_at(u)
            i = v[j]
            others: Scalar = Fraction(0)
            for w, c in enumerate(row.forward):
                if w != i:
                    others = others + c * table.down(t, u + (w,))
            if up is not None:
                others = others + row.back * up
            denom = 1 - others
            if denom <= 0:
                raise NotTransient("ascent system degenerates", {"vertex": t.name(v[: j + 1])})
            up = row.forward[i] / denom
            out.append(up)
        return out

    def ascent(self, op: TransitionOperator, table: FirstPassageTable, v: Vertex) -> Scalar:
        if not v:
            return Fraction(1)
        return self.ascent_path(op, table, v)[-1]

    def max_ascent(
        self, op: TransitionOperator, table: FirstPassageTable, depth: Optional[int] = None
    ) -> tuple[Scalar, Optional[Vertex]]:
        """Largest U(v_-, v) over 1 <= |v| <= depth, with a vertex attaining it."""
        t = op.tree
        depth = t.depth if depth is None else depth
        tree_service.guard(t.ball_size(depth))
        best: Scalar = Fraction(0)
        where: Optional[Vertex] = None
        ascents: dict[Vertex, Scalar] = {}
        for v in t.ball(depth):
            if not v:
                continue
            u = v[:-1]
            row = op.row_at(u)
            others: Scalar = Fraction(0)
            for w, c in enumerate(row.forward):
                if w != v[-1]:
                    others = others + c * table.down(t, u + (w,))
            if u:
                others = others + row.back * ascents[u]
            ascents[v] = row.forward[v[-1]] / (1 - others)
            if ascents[v] > best:
                best, where = ascents[v], v
        return best, where

    def max_descent(
        self, op: TransitionOperator, table: FirstPassageTable
    ) -> tuple[Scalar, Optional[str]]:
        """Largest U(v, v_-) over the types that occur below the root."""
        t = op.tree
        below = t.automaton.types_below_root()
        best: Scalar = Fraction(0)
        witness: Optional[str] = None
        for name in sorted(below):
            if table.descent[name] > best:
                best, witness = table.descent[name], name
        return best, witness

    def first_passage(
        self, op: TransitionOperator, table: FirstPassageTable, u: Vertex, v: Vertex
    ) -> Scalar:
        """U(u, v) as the product of one-step passages along [u, v]."""
        t = op.tree
        path = tree_service.geodesic(t, u, v)
        value: Scalar = Fraction(1)
        lowest = min(path, key=len)
        for a, b in zip(path, path[1:]):
            if len(b) < len(a):
                value = value * table.down(t, a)
        if len(v) > len(lowest):
            ascents = self.ascent_path(op, table, v)
            for step in ascents[len(lowest):]:
                value = value * step
        return value

    # --- kernels and hitting distribution ----------------------------------

    def poisson_kernel(
        self, op: TransitionOperator, table: FirstPassageTable, v: Vertex
    ) -> ArcFunction:
        """K(v, ·) on arcs of generation |v|: U(v, u) / U(o, u)."""
        t = op.tree
        n = len(v)
        tree_service.guard(t.frontier_size(n))
        values = {}
        for u in t.frontier(n):
            base = self.first_passage(op, table, (), u)
            if base == 0:
                raise ZeroMassArc("root never reaches this arc", {"vertex": t.name(u)})
            values[u] = self.first_passage(op, table, v, u) / base
        return ArcFunction.from_arc_values(t, n, values)

    def hitting_kernel_ratio(
        self, op: TransitionOperator, table: FirstPassageTable, v: Vertex
    ) -> Scalar:
        """k(v) / U(o, v) = (1 - U(v, v_-)) / (1 - U(v_-, v) U(v, v_-))."""
        if not v:
            return Fraction(1)
        down = table.down(op.tree, v)
        return (1 - down) / (1 - self.ascent(op, table, v) * down)

    def hitting_distribution(
        self, op: TransitionOperator, table: FirstPassageTable, depth: Optional[int] = None
    ) -> ArcMeasure:
        """Distribution of the boundary point reached by the walk from o."""
        if op.is_forward_only:
            return measure_service.arc_measure_from_Q(op)

        t = op.tree
        depth = t.depth if depth is None else depth
        tree_service.guard(t.ball_size(depth))
        unfolded = t if t.explicit and depth == t.depth else t.unfold(depth)
        k: dict[Vertex, Scalar] = {(): 1.0}
        shares: dict[str, tuple[Scalar, ...]] = {}
        for v in t.ball(depth):
            kids = t.children(v) if len(v) < depth else []
            for c in kids:
                k[c] = float(self.first_passage(op, table, (), c)) * float(
                    self.hitting_kernel_ratio(op, table, c)
                )
            if not kids:
                shares[unfolded.type_at(v)] = ()
            elif k[v] == 0:
                shares[unfolded.type_at(v)] = tuple(1.0 / len(kids) for _ in kids)
            else:
                shares[unfolded.type_at(v)] = tuple(k[c] / k[v] for c in kids)
        return ArcMeasure(tree=unfolded, shares=shares)

    def kernel_normalization(
        self, op: TransitionOperator, table: FirstPassageTable, v: Vertex, m: ArcMeasure
    ) -> Scalar:
        """∫ K(v, ·) dν over the arcs of generation |v|."""
        kernel = self.poisson_kernel(op, table, v)
        return sum(
            weighted(m.mass(u), kernel.value(u)) for u in op.tree.frontier(len(v))
        )

    def poisson_transform(
        self, op: TransitionOperator, table: FirstPassageTable, f: ArcFunction
    ) -> TreeFunction:
        """h(v) = ∫ f K(v, ·) dν on B_n, n the generation of f."""
        if op.is_forward_only:
            return measure_service.project_dagger(measure_service.arc_measure_from_Q(op), f)

        t = op.tree
        n = f.generation
        tree_service.guard(t.ball_size(n) * max(t.frontier_size(n), 1))
        m = self.hitting_distribution(op, table, n)
        arcs = [(u, m.mass(u), self.first_passage(op, table, (), u)) for u in t.frontier(n)]
        values = {}
        for v in t.ball(n):
            total: Any = 0.0
            for u, mass, base in arcs:
                if mass == 0:
                    continue
                weight = mass * self.first_passage(op, table, v, u) / base
                total = total + weighted(float(weight), f.value(u))
            values[v] = total
        return TreeFunction.from_mapping(t, values, defined_to=n)

    # --- Dirichlet problem -------------------------------------------------

    def make_contour(self, t: Tree, vertices: Iterable[Vertex]) -> Contour:
        """Validate a contour and find its interior (the component of o)."""
        contour = frozenset(t.check(v) for v in vertices)
        if () in contour:
            raise SingularSystem("contour contains the root")
        for v in contour:
            if v[:-1] in contour:
                raise SingularSystem("adjacent contour vertices", {"vertex": t.name(v)})

        interior: set[Vertex] = set()
        stack: list[Vertex] = [()]
        while stack:
            v = stack.pop()
            interior.add(v)
            tree_service.guard(len(interior))
            kids = t.children(v)
            if kids and len(v) == t.depth:
                raise SingularSystem(
                    "contour does not enclose the root", {"escape": t.name(v)}
                )
            stack.extend(c for c in kids if c not in contour)

        for v in contour:
            if v[:-1] not in interior:
                raise SingularSystem("contour vertex away from the interior", {"vertex": t.name(v)})
        return Contour(vertices=contour, interior=frozenset(interior))

    def circle_contour(self, t: Tree, n: int) -> Contour:
        """C_n with interior B_{n-1}."""
        if not 1 <= n <= t.depth:
            raise ConfigError("contour depth outside 1..D", {"depth": n})
        tree_service.guard(t.ball_size(n))
        return self.make_contour(t, t.circle(n))

    def solve_dirichlet(
        self, op: TransitionOperator, contour: Contour, boundary_values: Mapping[Vertex, Any]
    ) -> TreeFunction:
        """Harmonic on the interior, equal to the given values on the contour."""
        t = op.tree
        missing = [v for v in contour.vertices if v not in boundary_values]
        if missing:
            raise ConfigError("boundary value missing", {"vertex": t.name(missing[0])})

        interior = sorted(contour.interior, key=lambda v: (len(v), v))
        index = {v: i for i, v in enumerate(interior)}
        values = {v: to_float(boundary_values[v]) for v in contour.vertices}
        dtype = complex if any(isinstance(x, complex) for x in values.values()) else float

        a = lil_matrix((len(interior), len(interior)), dtype=float)
        b = np.zeros(len(interior), dtype=dtype)
        for x in interior:
            i = index[x]
            a[i, i] += 1.0
            row = op.row_at(x)
            neighbours = [(x + (j,), c) for j, c in enumerate(row.forward)]
            if x:
                neighbours.append((x[:-1], row.back))
            for y, c in neighbours:
                if y in index:
                    a[i, index[y]] -= float(c)
                else:
                    b[i] += float(c) * values[y]

        matrix = csr_matrix(a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            solution = np.atleast_1d(spsolve(matrix, b))
        if not np.all(np.isfinite(solution)):
            raise SingularSystem("interior system is singular", {"size": len(interior)})
        residual = float(np.max(np.abs(matrix @ solution - b))) if len(b) else 0.0
        if residual > get_settings().dirichlet_tol:
            raise SingularSystem("interior solve is inaccurate", {"residual": residual})
        logger.info("dirichlet: %d interior vertices, residual %.3g", len(interior), residual)

        out: dict[Vertex, Any] = {}
        for v in interior:
            x = solution[index[v]]
            out[v] = complex(x) if dtype is complex else float(x)
        for v, x in values.items():
            out[v] = complex(x) if dtype is complex else float(x)
        return TreeFunction.from_mapping(
            t, out, defined_to=max(len(v) for v in contour.vertices)
        )

    def contour_summation(
        self,
        op: TransitionOperator,
        contour: Contour,
        values: Mapping[Vertex, Any],
        start: Vertex = (),
    ) -> Any:
        """Σ_{c ∈ contour} U_C(start, c) h(c) with first hits of the stopped walk.

        Passage probabilities factor along geodesics; each one-step factor is
        solved on directed edges with contour vertices absorbing.
        """
        t = op.tree
        memo: dict[tuple[Vertex, Vertex], Scalar] = {}

        def neighbours(a: Vertex) -> list[tuple[Vertex, Scalar]]:
            row = op.row_at(a)
            out = [(a + (j,), c) for j, c in enumerate(row.forward)]
            if a:
                out.append((a[:-1], row.back))
            return out

        def step(a: Vertex, b: Vertex) -> Scalar:
            # probability that the stopped walk from a ever visits its neighbour b
            if a in contour.vertices:
                return Fraction(0)
            key = (a, b)
            if key not in memo:
                others: Scalar = Fraction(0)
                hit: Scalar = Fraction(0)
                for w, c in neighbours(a):
                    if w == b:
                        hit = c
                    elif c != 0:
                        others = others + c * step(w, a)
                memo[key] = hit / (1 - others)
            return memo[key]

        total: Any = 0
        for c in sorted(contour.vertices):
            path = tree_service.geodesic(t, start, c)
            if any(w in contour.vertices for w in path[:-1]):
                continue
            u: Scalar = Fraction(1)
            for a, b in zip(path, path[1:]):
                u = u * step(a, b)
            total = total + weighted(u, values[c])
        return total

    # --- regularity --------------------------------------------------------

    def check_regularity(self, op: TransitionOperator, mode: str) -> RegularityReport:
        if mode == "very_regular":
            return self._very_regular(op)
        if mode == "product_decay":
            return self._product_decay(op)
        raise ConfigError("unknown regularity mode", {"mode": mode})

    def _very_regular(self, op: TransitionOperator) -> RegularityReport:
        """Best δ with p(u, v) >= δ on all edges and p(u, u_-) <= 1/2 - δ."""
        t = op.tree
        reachable = {ROOT_CONE} | t.automaton.types_below_root()
        delta: Optional[Scalar] = None
        witness = None
        for cone in sorted(reachable):
            row = op.row(cone)
            bounds = list(row.forward)
            if cone != ROOT_CONE:
                bounds += [row.back, Fraction(1, 2) - row.back]
            if not bounds:
                # terminal vertex: only the father, with coefficient <= 1
                bounds = [Fraction(1, 2) - row.back]
            local = min(bounds)
            if delta is None or local < delta:
                delta, witness = local, cone
        member = delta is not None and delta > 0
        epsilon = 4 * delta / (1 + 2 * delta) if member else None
        certified = member and all(
            c <= Fraction(1, 2) - delta for cone in reachable for c in op.row(cone).forward
        )
        return RegularityReport(
            mode="very_regular",
            is_member=member,
            delta=delta,
            epsilon=epsilon,
            witness=witness,
            ascent_certified=certified,
        )

    def _product_decay(self, op: TransitionOperator) -> RegularityReport:
        """Every reachable type leads, through arcs of positive mass, into a cycle
        of types that contains a branching step (conditional share < 1).

        Decided on the type graph: a child edge counts when its coefficient is
        positive and, for nearest-neighbour operators, the child's descent
        probability is below 1.
        """
        t = op.tree
        table = None if op.is_forward_only else self.descent_probabilities(op)
        margin = get_settings().transience_margin

        def positive_children(cone: str) -> list[str]:
            row = op.row(cone)
            kids = t.child_cones(cone)
            out = []
            for kid, c in zip(kids, row.forward):
                if c <= 0:
                    continue
                if table is not None and table.descent[kid] >= 1 - margin:
                    continue
                out.append(kid)
            return out

        counted = {cone: positive_children(cone) for cone in [ROOT_CONE, *t.automaton.types]}
        full = nx.DiGraph({cone: list(dict.fromkeys(kids)) for cone, kids in counted.items()})
        graph = full.subgraph({ROOT_CONE} | nx.descendants(full, ROOT_CONE))

        cyclic = set()
        for component in nx.strongly_connected_components(graph):
            if len(component) > 1 or any(graph.has_edge(c, c) for c in component):
                cyclic |= component
        # a type on a cycle through a branching type, reachable from every type
        decaying = {c for c in cyclic if len(counted[c]) >= 2}
        for cone in sorted(graph):
            if not counted[cone]:
                return RegularityReport(mode="product_decay", is_member=False, witness=cone)
            if cone not in decaying and not decaying & nx.descendants(graph, cone):
                return RegularityReport(mode="product_decay", is_member=False, witness=cone)
        return RegularityReport(mode="product_decay", is_member=True)


operator_service = OperatorService()
