import logging
from fractions import Fraction
from typing import Any, Mapping, Optional

from pydantic import ValidationError

from config import get_settings
from core.errors import ConfigError, MissingValue, NotStochastic, ZeroMassArc
from core.numbers import is_exact, modulus, saturate, to_float, weighted
from models.function import ArcFunction, Sector, TreeFunction, arc_node, tree_node
from models.measure import ArcMeasure, BoundaryMartingale, MartingaleCheck
from models.operator import Row, Scalar, TransitionOperator
from models.scene import MeasureSpec
from models.tree import ROOT_CONE, ConeTypeAutomaton, Tree, Vertex
from services.tree_core import tree_service

logger = logging.getLogger(__name__)


def _same_value(a: Any, b: Any, tol: float) -> bool:
    if is_exact(a) and is_exact(b):
        return a == b
    return abs(to_float(a) - to_float(b)) <= tol


def _sums_to_one(values: tuple[Scalar, ...]) -> bool:
    total = sum(values)
    if isinstance(total, Fraction) or isinstance(total, int):
        return total == 1
    return abs(total - 1) <= get_settings().additivity_tol


class MeasureService:
    """Arc measures, martingale projections and the convergence-in-measure metric."""

    # --- measures and forward-only operators -------------------------------

    def arc_measure_from_Q(self, q: TransitionOperator) -> ArcMeasure:  # noqa: N802
        if not q.is_forward_only:
            raise ConfigError("operator is not forward-only", {"kind": q.kind})
        for cone in q.cones():
            row = q.row(cone)
            if row.forward and not _sums_to_one(row.forward):
                raise NotStochastic(
                    "forward coefficients do not sum to 1",
                    {"type": cone, "sum": sum(row.forward)},
                )
        shares = {t: r.forward for t, r in q.rows.items()}
        root = q.root_row.forward if q.root_row is not None else None
        return ArcMeasure(tree=q.tree, shares=shares, root_shares=root)

    def Q_from_arc_measure(self, m: ArcMeasure) -> TransitionOperator:  # noqa: N802
        self._require_positive(m)
        rows = {t: Row(back=Fraction(0), forward=s) for t, s in m.shares.items()}
        root = Row(back=Fraction(0), forward=m.root_shares) if m.root_shares is not None else None
        return TransitionOperator(tree=m.tree, rows=rows, root_row=root)

    def _require_positive(self, m: ArcMeasure) -> None:
        t = m.tree
        for d, cones in enumerate(t.reachable_cones(max(t.depth - 1, 0))):
            if d >= t.depth:
                break
            for cone in sorted(cones):
                shares = m.child_shares(cone)
                if any(s == 0 for s in shares):
                    v = tree_service.find_cone(t, cone, d)
                    i = next(i for i, s in enumerate(shares) if s == 0)
                    raise ZeroMassArc(
                        "arc with zero mass; prune the tree first",
                        {"vertex": t.name(v + (i,), strict=False)},
                    )

    def arc_measure_from_masses(
        self, t: Tree, masses: Mapping[Any, Fraction]
    ) -> ArcMeasure:
        """Measure from per-vertex masses on B_D (vertex paths or names as keys)."""
        tree_service.guard(t.ball_size(t.depth))
        by_vertex = {t.vertex(k): Fraction(m) for k, m in masses.items()}
        target = t if t.explicit else t.unfold(t.depth)

        if by_vertex.get((), None) != 1:
            raise ConfigError("root mass must be 1", {"mass": by_vertex.get(())})
        shares: dict[str, tuple[Fraction, ...]] = {}
        for v in t.ball(t.depth):
            kids = t.children(v) if len(v) < t.depth else []
            missing = [c for c in [v, *kids] if c not in by_vertex]
            if missing:
                raise MissingValue("mass not given", {"vertex": t.name(missing[0])})
            parent = by_vertex[v]
            values = [by_vertex[c] for c in kids]
            if parent < 0 or any(x < 0 for x in values):
                raise ConfigError("negative mass", {"vertex": t.name(v)})
            if kids and sum(values) != parent:
                raise ConfigError(
                    "masses are not additive",
                    {"vertex": t.name(v), "mass": parent, "children": sum(values)},
                )
            if not kids:
                shares[target.type_at(v)] = ()
            elif parent == 0:
                shares[target.type_at(v)] = tuple(Fraction(1, len(kids)) for _ in kids)
            else:
                shares[target.type_at(v)] = tuple(x / parent for x in values)
        return ArcMeasure(tree=target, shares=shares)

    def build_measure(
        self,
        t: Tree,
        doc: MeasureSpec | dict[str, Any] | None,
        q: Optional[TransitionOperator] = None,
    ) -> ArcMeasure:
        """Measure from a scene document; without masses or shares, the one a
        forward-only operator induces."""
        if doc is not None and not isinstance(doc, MeasureSpec):
            try:
                doc = MeasureSpec.model_validate(doc)
            except ValidationError as e:
                raise ConfigError("invalid measure document", {"detail": str(e)}) from e

        if doc is not None and doc.masses is not None:
            return self.arc_measure_from_masses(t, doc.masses)
        if doc is not None and doc.shares is not None:
            shares: dict[str, tuple[Fraction, ...]] = {}
            for name in t.automaton.types:
                if name not in doc.shares:
                    raise ConfigError("no shares for type", {"type": name})
                shares[name] = tuple(doc.shares[name])
            root = tuple(doc.root_shares) if doc.root_shares is not None else None
            for cone, own in [*shares.items(), (ROOT_CONE, root)]:
                if own is None:
                    continue
                kids = t.child_cones(cone)
                if len(own) != len(kids):
                    raise ConfigError("share count does not match the children", {"type": cone})
                if any(s < 0 for s in own) or (kids and sum(own) != 1):
                    raise NotStochastic("shares are not a probability vector", {"type": cone})
            return ArcMeasure(tree=t, shares=shares, root_shares=root)
        if q is not None and q.is_forward_only:
            return self.arc_measure_from_Q(q)
        raise ConfigError("measure needs masses, shares or a forward-only operator")

    def prune(self, m: ArcMeasure) -> ArcMeasure:
        """Drop zero-mass child arcs; the result lives on a pruned tree.

        Child indices are renumbered among the surviving children.
        """
        t = m.tree
        types: dict[str, tuple[str, ...]] = {}
        shares: dict[str, tuple[Scalar, ...]] = {}
        for typ, kids in t.automaton.types.items():
            own = m.shares[typ]
            types[typ] = tuple(k for k, s in zip(kids, own) if s != 0)
            shares[typ] = tuple(s for s in own if s != 0)

        root_type, root_shares = t.automaton.root_type, None
        if m.root_shares is not None:
            kids = t.automaton.types[root_type]
            kept = tuple(k for k, s in zip(kids, m.root_shares) if s != 0)
            root_shares = tuple(s for s in m.root_shares if s != 0)
            if kept != types[root_type]:
                root_type = f"{root_type}@root"
                types[root_type] = kept
                shares[root_type] = root_shares
                root_shares = None

        reachable = ConeTypeAutomaton(types=types, root_type=root_type).reachable_types()
        pruned = Tree(
            automaton=ConeTypeAutomaton(
                types={k: v for k, v in types.items() if k in reachable}, root_type=root_type
            ),
            depth=t.depth,
            explicit=t.explicit,
        )
        logger.info("pruned %d cone types", len(types) - len(reachable))
        return ArcMeasure(
            tree=pruned,
            shares={k: v for k, v in shares.items() if k in reachable},
            root_shares=root_shares,
        )

    # --- projections -------------------------------------------------------

    def project_dagger(self, m: ArcMeasure, f: ArcFunction) -> TreeFunction:
        """f†(v) = average of f over the arc I(v)."""
        return TreeFunction(tree=m.tree, root=self.sector_average(m, ROOT_CONE, f.root))

    def sector_average(
        self,
        m: ArcMeasure,
        cone: str,
        node: Sector,
        memo: Optional[dict[tuple[str, Sector], Sector]] = None,
    ) -> Sector:
        """Tree-function node of arc averages below a vertex of the given cone."""
        t = m.tree
        memo = {} if memo is None else memo

        def dagger(cone: str, node: Sector) -> Sector:
            if node.is_leaf:
                return node
            key = (cone, node)
            cached = memo.get(key)
            if cached is not None:
                return cached
            shares = m.child_shares(cone)
            children = []
            total: Any = 0
            for i, kid in enumerate(t.child_cones(cone)):
                child = node.child(i)
                if shares[i] == 0 and not child.is_leaf:
                    raise ZeroMassArc("average over an arc of zero mass", {"type": kid})
                out = dagger(kid, child)
                children.append(out)
                total = total + weighted(shares[i], out.value)
            result = tree_node(total, children)
            memo[key] = result
            return result

        return dagger(cone, node)

    def lift(self, h: TreeFunction, n: int) -> ArcFunction:
        """h*_n: the value h(v) on each arc I(v) with |v| = n."""
        if h.defined_to is not None and n > h.defined_to:
            raise MissingValue(
                "function not defined on the requested circle",
                {"generation": n, "defined_to": h.defined_to},
            )
        memo: dict[tuple[Sector, int], Sector] = {}

        def up(node: Sector, r: int) -> Sector:
            if node.is_leaf:
                return node
            if r == 0:
                return Sector.leaf(node.value)
            key = (node, r)
            cached = memo.get(key)
            if cached is None:
                cached = arc_node(up(c, r - 1) for c in node.children)
                memo[key] = cached
            return cached

        return ArcFunction(tree=h.tree, generation=n, root=up(h.root, n))

    def project_pi(self, m: ArcMeasure, f: ArcFunction, n: int) -> ArcFunction:
        if n >= f.generation:
            return f.at_generation(n)
        return self.lift(self.project_dagger(m, f), n)

    # --- metric ------------------------------------------------------------

    def dist_nu(self, m: ArcMeasure, f: ArcFunction, g: ArcFunction) -> Scalar:
        """∫ φ(|f-g|) dν over arcs, φ(x) = x/(1+x)."""
        t = m.tree
        bits = get_settings().modulus_bits
        memo: dict[tuple[str, Sector, Sector], Scalar] = {}

        def walk(cone: str, a: Sector, b: Sector) -> Scalar:
            if a is b:
                return Fraction(0)
            if a.is_leaf and b.is_leaf:
                return saturate(modulus(a.value - b.value, bits))
            key = (cone, a, b)
            cached = memo.get(key)
            if cached is not None:
                return cached
            total: Scalar = Fraction(0)
            for i, (kid, share) in enumerate(zip(t.child_cones(cone), m.child_shares(cone))):
                if share != 0:
                    total = total + share * walk(kid, a.child(i), b.child(i))
            memo[key] = total
            return total

        return walk(ROOT_CONE, f.root, g.root)

    # --- martingales -------------------------------------------------------

    def martingale_levels(
        self, m: ArcMeasure, h: TreeFunction, depth: Optional[int] = None
    ) -> BoundaryMartingale:
        depth = m.tree.depth if depth is None else depth
        return BoundaryMartingale(levels=[self.lift(h, n) for n in range(depth + 1)])

    def validate_martingale(self, m: ArcMeasure, b: BoundaryMartingale) -> MartingaleCheck:
        for n in range(len(b.levels) - 1):
            projected = self.project_pi(m, b.levels[n + 1], n)
            if projected.root is b.levels[n].root:
                continue
            where = self._first_difference(m.tree, b.levels[n], projected)
            if where is None:
                continue
            logger.debug("martingale violation at level %d: %s", n, where)
            return MartingaleCheck(ok=False, level=n, **where)
        return MartingaleCheck(ok=True)

    def _first_difference(
        self, t: Tree, expected: ArcFunction, found: ArcFunction
    ) -> Optional[dict[str, str]]:
        """First arc where the values differ; floats are compared to additivity_tol."""
        tol = get_settings().additivity_tol
        stack: list[tuple[Vertex, Sector, Sector]] = [((), expected.root, found.root)]
        while stack:
            v, a, b = stack.pop()
            if a is b:
                continue
            if a.is_leaf and b.is_leaf:
                if _same_value(a.value, b.value, tol):
                    continue
                return {
                    "vertex": t.name(v, strict=False),
                    "expected": str(a.value),
                    "found": str(b.value),
                }
            width = max(len(a.children), len(b.children))
            for i in reversed(range(width)):
                stack.append((v + (i,), a.child(i), b.child(i)))
        return None


measure_service = MeasureService()
