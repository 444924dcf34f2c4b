"""Sparse function storage on trees.

A function is a DAG of interned ``Sector`` nodes following the tree shape.
A node without children is constant on its whole sector (tree functions) or
arc (boundary functions). Interning makes structurally equal sub-functions the
same object, so memoized recursions visit each distinct sector once.
"""

from typing import Any, Iterable, Mapping, Optional
from weakref import WeakValueDictionary

from core.errors import MissingValue
from core.numbers import canonical
from models.tree import Tree, Vertex


class Sector:
    __slots__ = ("value", "children", "__weakref__")

    _interned: "WeakValueDictionary[tuple, Sector]" = WeakValueDictionary()

    value: Any
    children: tuple["Sector", ...]

    @classmethod
    def of(cls, value: Any, children: Iterable["Sector"] = ()) -> "Sector":
        """Interned node; equal exact scalars share one node whatever their type."""
        value = canonical(value)
        children = tuple(children)
        key = (type(value), value, children)
        node = cls._interned.get(key)
        if node is None:
            node = object.__new__(cls)
            node.value = value
            node.children = children
            cls._interned[key] = node
        return node

    @classmethod
    def leaf(cls, value: Any) -> "Sector":
        return cls.of(value, ())

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def child(self, i: int) -> "Sector":
        """i-th child; a leaf stands for all of its (constant) descendants."""
        return self.children[i] if self.children else self

    def __repr__(self) -> str:
        if self.is_leaf:
            return f"Sector({self.value})"
        return f"Sector({self.value}, <{len(self.children)} children>)"


def tree_node(value: Any, children: Iterable[Sector]) -> Sector:
    """Canonical tree-function node: drop children that repeat the value."""
    children = tuple(children)
    leaf = Sector.leaf(value)
    if all(c is leaf for c in children):
        return leaf
    return Sector.of(value, children)


def arc_node(children: Iterable[Sector]) -> Sector:
    """Canonical internal node of a boundary function (no value of its own)."""
    children = tuple(children)
    if children and children[0].is_leaf and all(c is children[0] for c in children):
        return children[0]
    return Sector.of(None, children)


def _descend(tree: Tree, root: Sector, v: Vertex) -> Sector:
    node = root
    for i in v:
        node = node.child(i)
    return node


class TreeFunction:
    """Values on vertices; constant on sectors below leaf nodes.

    ``defined_to`` is None when the sector-constant tail is the function itself
    (certified), or the radius of the ball on which values are known.
    """

    __slots__ = ("tree", "root", "defined_to")

    def __init__(self, tree: Tree, root: Sector, defined_to: Optional[int] = None):
        self.tree = tree
        self.root = root
        self.defined_to = defined_to

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TreeFunction)
            and other.root is self.root
            and other.defined_to == self.defined_to
        )

    def __hash__(self) -> int:
        return hash((id(self.root), self.defined_to))

    def at(self, v: Vertex) -> Sector:
        if self.defined_to is not None and len(v) > self.defined_to:
            raise MissingValue(
                "value beyond the defined ball",
                {"vertex": self.tree.name(v, strict=False), "defined_to": self.defined_to},
            )
        return _descend(self.tree, self.root, v)

    def value(self, v: Vertex) -> Any:
        return self.at(v).value

    def __call__(self, v: Vertex) -> Any:
        return self.value(v)

    def values(self, depth: int) -> dict[Vertex, Any]:
        return {v: self.value(v) for v in self.tree.ball(depth)}

    @classmethod
    def constant(cls, tree: Tree, value: Any) -> "TreeFunction":
        return cls(tree=tree, root=Sector.leaf(value))

    @classmethod
    def from_mapping(
        cls, tree: Tree, values: Mapping[Vertex, Any], defined_to: Optional[int] = None
    ) -> "TreeFunction":
        """Build from values on an ancestor-closed vertex set.

        A vertex whose children are all absent is extended constantly below.
        """
        if () not in values:
            raise MissingValue("mapping lacks the root value")

        def build(v: Vertex) -> Sector:
            kids = tree.children(v)
            present = [c in values for c in kids]
            if not any(present):
                return Sector.leaf(values[v])
            if not all(present):
                raise MissingValue(
                    "children only partially given", {"vertex": tree.name(v, strict=False)}
                )
            return tree_node(values[v], (build(c) for c in kids))

        return cls(tree=tree, root=build(()), defined_to=defined_to)


class ArcFunction:
    """A locally constant (A_n-measurable) function on the boundary.

    Leaves at depth <= ``generation`` hold the arc values; internal nodes carry
    no value.
    """

    __slots__ = ("tree", "generation", "root")

    def __init__(self, tree: Tree, generation: int, root: Sector):
        self.tree = tree
        self.generation = generation
        self.root = root

    def __eq__(self, other: object) -> bool:
        # Equal as functions: finer generation does not matter.
        return isinstance(other, ArcFunction) and other.root is self.root

    def __hash__(self) -> int:
        return hash(id(self.root))

    def at(self, v: Vertex) -> Sector:
        return _descend(self.tree, self.root, v)

    def value(self, v: Vertex) -> Any:
        node = self.at(v)
        if not node.is_leaf:
            raise MissingValue(
                "not constant on this arc", {"vertex": self.tree.name(v, strict=False)}
            )
        return node.value

    def __call__(self, v: Vertex) -> Any:
        return self.value(v)

    def arc_values(self) -> dict[Vertex, Any]:
        return {v: self.value(v) for v in self.tree.frontier(self.generation)}

    def at_generation(self, n: int) -> "ArcFunction":
        """Same function regarded at a finer generation n >= its own."""
        if n < self.generation:
            raise ValueError("cannot coarsen the generation of a boundary function")
        return ArcFunction(tree=self.tree, generation=n, root=self.root)

    @classmethod
    def constant(cls, tree: Tree, value: Any, generation: int = 0) -> "ArcFunction":
        return cls(tree=tree, generation=generation, root=Sector.leaf(value))

    @classmethod
    def from_arc_values(
        cls, tree: Tree, generation: int, values: Mapping[Vertex, Any]
    ) -> "ArcFunction":
        """Build from values on arcs of ``generation`` (or coarser arcs)."""

        def build(v: Vertex) -> Sector:
            if v in values:
                return Sector.leaf(values[v])
            kids = tree.children(v) if len(v) < generation else []
            if not kids:
                raise MissingValue("arc without value", {"vertex": tree.name(v, strict=False)})
            return arc_node(build(c) for c in kids)

        return cls(tree=tree, generation=generation, root=build(()))
