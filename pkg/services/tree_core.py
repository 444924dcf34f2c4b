import logging
from collections import deque
from fractions import Fraction
from typing import Any, Iterator, Optional

import networkx as nx
from pydantic import ValidationError

from config import get_settings
from core.errors import ConfigError, CycleDetected, EnumerationLimit, UnknownType
from core.numbers import modulus, saturate
from models.function import TreeFunction
from models.scene import TreeSpec
from models.tree import (
    ROOT_CONE,
    ConeTypeAutomaton,
    HDistance,
    LinearBranchReport,
    Tree,
    Vertex,
    VertexOrdering,
)

logger = logging.getLogger(__name__)


class TreeService:
    """Builds trees and answers combinatorial questions about them."""

    def build_tree(self, doc: TreeSpec | dict[str, Any]) -> Tree:
        if not isinstance(doc, TreeSpec):
            try:
                doc = TreeSpec.model_validate(doc)
            except ValidationError as e:
                raise ConfigError("invalid tree document", {"detail": str(e)}) from e

        if doc.automaton is not None:
            tree = self._build_automaton(doc)
        else:
            tree = self._build_explicit(doc)
        logger.info(
            "built %s tree: %d cone types, depth %d",
            "explicit" if tree.explicit else "automaton",
            len(tree.automaton.types),
            tree.depth,
        )
        return tree

    def _build_automaton(self, doc: TreeSpec) -> Tree:
        spec = doc.automaton
        if ROOT_CONE in spec.types:
            raise ConfigError("reserved type name", {"type": ROOT_CONE})
        if spec.root_type not in spec.types:
            raise UnknownType("root type is not declared", {"type": spec.root_type})
        for t, kids in spec.types.items():
            for child in kids:
                if child not in spec.types:
                    raise UnknownType("undeclared child type", {"type": t, "child": child})
        automaton = ConeTypeAutomaton(
            types={t: tuple(kids) for t, kids in spec.types.items()}, root_type=spec.root_type
        )
        return Tree(automaton=automaton, depth=spec.depth)

    def _build_explicit(self, doc: TreeSpec) -> Tree:
        children = doc.explicit
        fathers: dict[str, str] = {}
        for v, kids in children.items():
            for w in kids:
                if w in fathers or w == v:
                    raise CycleDetected("vertex has more than one father", {"vertex": w})
                fathers[w] = v

        vertices = set(children) | set(fathers)
        if ROOT_CONE in vertices:
            raise ConfigError("reserved vertex name", {"vertex": ROOT_CONE})
        roots = sorted(vertices - set(fathers))
        if len(roots) != 1:
            raise CycleDetected("children map needs exactly one root", {"roots": roots})
        root = roots[0]

        graph = nx.DiGraph()
        graph.add_nodes_from(vertices)
        graph.add_edges_from((v, w) for v, kids in children.items() for w in kids)
        # with one father each, vertices off the root's tree sit on a cycle
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            raise CycleDetected(
                "children map contains a cycle", {"vertices": sorted(v for v, _ in cycle)[:5]}
            )
        height = nx.dag_longest_path_length(graph)

        depth = height if doc.depth is None else doc.depth
        if depth < height:
            raise ConfigError(
                "explicit tree is deeper than the declared depth",
                {"height": height, "depth": depth},
            )
        automaton = ConeTypeAutomaton(
            types={v: tuple(children.get(v, [])) for v in vertices}, root_type=root
        )
        return Tree(automaton=automaton, depth=depth, explicit=True)

    # --- combinatorics -----------------------------------------------------

    def geodesic(self, t: Tree, u: Vertex, v: Vertex) -> list[Vertex]:
        t.check(u)
        t.check(v)
        common = 0
        while common < min(len(u), len(v)) and u[common] == v[common]:
            common += 1
        up = [u[:i] for i in range(len(u), common, -1)]
        down = [v[:i] for i in range(common, len(v) + 1)]
        return up + down

    def distance(self, t: Tree, u: Vertex, v: Vertex) -> int:
        return len(self.geodesic(t, u, v)) - 1

    def sector(self, t: Tree, v: Vertex, depth: Optional[int] = None) -> Iterator[Vertex]:
        """S(v) ∩ B_depth in breadth-first order."""
        depth = t.depth if depth is None else depth
        t.check(v)
        self.guard(self.sector_size(t, v, depth))
        queue: deque[Vertex] = deque([v])
        while queue:
            w = queue.popleft()
            yield w
            if len(w) < depth:
                queue.extend(t.children(w))

    def sector_size(self, t: Tree, v: Vertex, depth: int) -> int:
        counts = {t.type_at(v): 1}
        total = 1 if len(v) <= depth else 0
        for _ in range(len(v), depth):
            nxt: dict[str, int] = {}
            for typ, c in counts.items():
                for child in t.automaton.types[typ]:
                    nxt[child] = nxt.get(child, 0) + c
            counts = nxt
            total += sum(counts.values())
        return total

    def ordering(self, t: Tree) -> VertexOrdering:
        return VertexOrdering(tree=t)

    def check_linear_branches(self, t: Tree, bound: int = 1) -> LinearBranchReport:
        """Longest run of single-child vertices above depth D.

        A single-child vertex has two neighbours (one for the root); the run
        length counts those vertices, so the path o-a-b has a branch of length 2.
        """
        if bound < 1:
            raise ValueError("bound must be >= 1")
        levels = t.reachable_cones(max(t.depth - 1, 0)) if t.depth > 0 else []

        # run[(cone, r)]: chain length starting at a vertex of this cone with r levels left
        run: dict[tuple[str, int], int] = {}

        def chain(cone: str, r: int) -> int:
            key = (cone, r)
            if key not in run:
                kids = t.child_cones(cone)
                run[key] = 0 if r == 0 or len(kids) != 1 else 1 + chain(kids[0], r - 1)
            return run[key]

        best, witness_at = 0, None
        for d, cones in enumerate(levels):
            for cone in sorted(cones):
                length = chain(cone, t.depth - d)
                if length > best:
                    best, witness_at = length, (cone, d)

        all_finite = True
        if not t.explicit:
            all_finite = not self._single_child_cycle(t)

        witness = None
        if witness_at is not None:
            witness = t.name(self.find_cone(t, *witness_at))
        report = LinearBranchReport(
            max_branch_length=best,
            all_finite=all_finite,
            bound=bound,
            within_bound=all_finite and best <= bound,
            witness=witness,
        )
        logger.debug("linear branches: %s", report)
        return report

    def _single_child_cycle(self, t: Tree) -> bool:
        """A reachable cycle of single-child types is an infinite linear branch."""
        types = t.automaton.types
        chains = nx.DiGraph(
            [(x, types[x][0]) for x in t.automaton.reachable_types() if len(types[x]) == 1]
        )
        return not nx.is_directed_acyclic_graph(chains)

    def find_cone(self, t: Tree, cone: str, depth: int) -> Vertex:
        """Leftmost vertex of the given cone key at the given depth."""
        if depth == 0:
            return ()
        levels = t.reachable_cones(depth)
        wanted = [set() for _ in range(depth + 1)]
        wanted[depth] = {cone}
        for d in range(depth - 1, -1, -1):
            wanted[d] = {c for c in levels[d] if wanted[d + 1] & set(t.child_cones(c))}
        v: Vertex = ()
        current = ROOT_CONE
        for d in range(1, depth + 1):
            kids = t.child_cones(current)
            i = next(i for i, c in enumerate(kids) if c in wanted[d])
            v, current = v + (i,), kids[i]
        return v

    # --- pointwise-convergence metric --------------------------------------

    def dist_H(  # noqa: N802
        self,
        f: TreeFunction,
        g: TreeFunction,
        ordering: Optional[VertexOrdering] = None,
        terms: Optional[int] = None,
    ) -> HDistance:
        """Σ_j 2^-j φ(|f-g|(x_j)) over the first J vertices of the ordering.

        J defaults to |B_D| capped at the metric_terms setting; vertices past the
        cap are covered by the tail bound. Returns the partial sum and the bound
        2^-J on the omitted tail (0 when the ordering exhausts a finite tree).
        """
        settings = get_settings()
        ordering = ordering or VertexOrdering(tree=f.tree)
        size = ordering.size()
        if terms is None:
            terms = min(size, settings.metric_terms)
        terms = min(terms, size)

        total = Fraction(0)
        weight = Fraction(1, 2)
        for v in ordering.take(terms):
            total += weight * saturate(modulus(f(v) - g(v), settings.modulus_bits))
            weight /= 2

        t = ordering.tree
        exhausted = terms == size and all(t.is_leaf(v) for v in t.circle(t.depth))
        tail = Fraction(0) if exhausted else Fraction(1, 2**terms)
        return HDistance(value=total, truncation_error=tail, terms=terms)

    def guard(self, count: int) -> None:
        limit = get_settings().enumeration_limit
        if count > limit:
            raise EnumerationLimit(
                "enumeration exceeds the vertex budget", {"count": count, "limit": limit}
            )


tree_service = TreeService()
