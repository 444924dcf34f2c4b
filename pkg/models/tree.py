from collections import deque
from fractions import Fraction
from typing import Iterator, Optional

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from core.errors import VertexNotFound

Vertex = tuple[int, ...]

# Cone key of the root vertex; every other vertex is keyed by its cone type.
ROOT_CONE = "<root>"


class ConeTypeAutomaton(BaseModel):
    """Finite-type description of a (possibly infinite) rooted tree."""

    model_config = ConfigDict(frozen=True)

    types: dict[str, tuple[str, ...]] = Field(..., description="type -> ordered child types")
    root_type: str

    _cache: dict[str, nx.DiGraph] = PrivateAttr(default_factory=dict)

    def graph(self) -> nx.DiGraph:
        """Type graph: an edge t -> c for every child type c of t."""
        if "graph" not in self._cache:
            self._cache["graph"] = nx.DiGraph(
                {t: list(dict.fromkeys(kids)) for t, kids in self.types.items()}
            )
        return self._cache["graph"]

    def types_below_root(self) -> set[str]:
        """Types of the vertices at depth >= 1."""
        return nx.descendants(self.graph(), self.root_type)

    def reachable_types(self) -> set[str]:
        return {self.root_type} | self.types_below_root()


class Tree(BaseModel):
    """Rooted, locally finite tree.

    Explicit trees are stored as automata with one cone type per vertex, named
    after the vertex. Vertices are addressed by child-index paths, root ``()``.
    """

    model_config = ConfigDict(frozen=True)

    automaton: ConeTypeAutomaton
    depth: int = Field(..., ge=0, description="Working depth D")
    explicit: bool = False

    _names: dict[str, Vertex] = PrivateAttr(default_factory=dict)
    _type_cache: dict[Vertex, str] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context) -> None:
        if self.explicit:
            for v in self.ball(self.depth):
                self._names[self.type_at(v)] = v

    # --- cones -----------------------------------------------------------

    @property
    def root(self) -> Vertex:
        return ()

    def cone_type(self, cone: str) -> str:
        return self.automaton.root_type if cone == ROOT_CONE else cone

    def child_cones(self, cone: str) -> tuple[str, ...]:
        return self.automaton.types[self.cone_type(cone)]

    def cone_at(self, v: Vertex) -> str:
        return ROOT_CONE if not v else self.type_at(v)

    def type_at(self, v: Vertex) -> str:
        cached = self._type_cache.get(v)
        if cached is not None:
            return cached
        t = self.automaton.root_type
        for i in v:
            kids = self.automaton.types[t]
            if not 0 <= i < len(kids):
                raise VertexNotFound("no such vertex", {"vertex": "/".join(["o", *map(str, v)])})
            t = kids[i]
        if len(v) <= 8:
            self._type_cache[v] = t
        return t

    # --- vertices --------------------------------------------------------

    def contains(self, v: Vertex) -> bool:
        if len(v) > self.depth:
            return False
        try:
            self.type_at(v)
        except VertexNotFound:
            return False
        return True

    def check(self, v: Vertex) -> Vertex:
        if not self.contains(v):
            raise VertexNotFound(
                "vertex outside the expanded tree",
                {"vertex": self.name(v, strict=False), "depth": self.depth},
            )
        return v

    def father(self, v: Vertex) -> Optional[Vertex]:
        return v[:-1] if v else None

    def degree_out(self, v: Vertex) -> int:
        return len(self.automaton.types[self.type_at(v)])

    def children(self, v: Vertex) -> list[Vertex]:
        return [v + (i,) for i in range(self.degree_out(v))]

    def is_leaf(self, v: Vertex) -> bool:
        return self.degree_out(v) == 0

    def name(self, v: Vertex, strict: bool = True) -> str:
        if self.explicit and (not strict or self.contains(v)):
            try:
                return self.type_at(v)
            except VertexNotFound:
                pass
        return "/".join(["o", *map(str, v)])

    def vertex(self, ref: "str | Vertex") -> Vertex:
        """Resolve a vertex name or path."""
        if isinstance(ref, tuple):
            return self.check(ref)
        if self.explicit and ref in self._names:
            return self._names[ref]
        parts = ref.split("/")
        if parts[0] != "o" or not all(p.isdigit() for p in parts[1:]):
            raise VertexNotFound("unknown vertex name", {"vertex": ref})
        return self.check(tuple(int(p) for p in parts[1:]))

    # --- circles, balls, arcs --------------------------------------------

    def circle(self, k: int) -> Iterator[Vertex]:
        """Vertices of C_k in lexicographic (= BFS) order."""
        stack: list[Vertex] = [()]
        while stack:
            v = stack.pop()
            if len(v) == k:
                yield v
                continue
            stack.extend(reversed(self.children(v)))

    def frontier(self, n: int) -> Iterator[Vertex]:
        """Arcs of generation n: C_n plus leaves shallower than n."""
        stack: list[Vertex] = [()]
        while stack:
            v = stack.pop()
            kids = self.children(v) if len(v) < n else []
            if not kids:
                yield v
                continue
            stack.extend(reversed(kids))

    def ball(self, k: int) -> Iterator[Vertex]:
        """Vertices of B_k in BFS order."""
        queue: deque[Vertex] = deque([()])
        while queue:
            v = queue.popleft()
            yield v
            if len(v) < k:
                queue.extend(self.children(v))

    def circle_size(self, k: int) -> int:
        """|C_k| counted on the automaton."""
        counts = {self.automaton.root_type: 1}
        for _ in range(k):
            nxt: dict[str, int] = {}
            for t, c in counts.items():
                for child in self.automaton.types[t]:
                    nxt[child] = nxt.get(child, 0) + c
            counts = nxt
        return sum(counts.values())

    def ball_size(self, k: int) -> int:
        return sum(self.circle_size(j) for j in range(k + 1))

    def frontier_size(self, n: int) -> int:
        leaves = 0
        counts = {self.automaton.root_type: 1}
        for _ in range(n):
            nxt: dict[str, int] = {}
            for t, c in counts.items():
                kids = self.automaton.types[t]
                if not kids:
                    leaves += c
                for child in kids:
                    nxt[child] = nxt.get(child, 0) + c
            counts = nxt
        return leaves + sum(counts.values())

    def reachable_cones(self, depth: int) -> list[set[str]]:
        """Cone keys occurring at each depth 0..depth."""
        levels = [{ROOT_CONE}]
        for _ in range(depth):
            nxt: set[str] = set()
            for cone in levels[-1]:
                nxt.update(self.child_cones(cone))
            levels.append(nxt)
        return levels

    def unfold(self, depth: int) -> "Tree":
        """Explicit copy of B_depth, one cone type per vertex, same paths."""
        types: dict[str, tuple[str, ...]] = {}
        for v in self.ball(depth):
            kids = self.children(v) if len(v) < depth else []
            types[self.name(v, strict=False)] = tuple(self.name(c, strict=False) for c in kids)
        automaton = ConeTypeAutomaton(types=types, root_type=self.name((), strict=False))
        return Tree(automaton=automaton, depth=depth, explicit=True)


class VertexOrdering(BaseModel):
    """Breadth-first enumeration x_1 = o, x_2, ... of the vertices of B_D."""

    model_config = ConfigDict(frozen=True)

    tree: Tree

    def __iter__(self) -> Iterator[Vertex]:
        return self.tree.ball(self.tree.depth)

    def take(self, count: int) -> list[Vertex]:
        out = []
        for v in self:
            if len(out) >= count:
                break
            out.append(v)
        return out

    def size(self) -> int:
        return self.tree.ball_size(self.tree.depth)


class HDistance(BaseModel):
    """Truncated pointwise-convergence distance with its tail bound."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: Fraction | float
    truncation_error: Fraction
    terms: int


class LinearBranchReport(BaseModel):
    max_branch_length: int
    all_finite: bool
    bound: int
    within_bound: bool
    witness: Optional[str] = Field(None, description="Top vertex of a longest chain")
