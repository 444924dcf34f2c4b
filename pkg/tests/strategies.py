from fractions import Fraction

from hypothesis import strategies as st
from hypothesis.strategies import composite

from models.function import ArcFunction
from models.tree import Tree
from services.operators import operator_service
from services.tree_core import tree_service

small_fractions = st.fractions(min_value=-4, max_value=4, max_denominator=6)


@composite
def shares(draw, k: int, low: int = 1, high: int = 6) -> tuple[Fraction, ...]:
    """k positive rationals summing to 1."""
    weights = draw(st.lists(st.integers(low, high), min_size=k, max_size=k))
    total = sum(weights)
    return tuple(Fraction(w, total) for w in weights)


@composite
def automata(
    draw, max_types: int = 3, min_children: int = 1, max_children: int = 4, max_depth: int = 10
) -> dict:
    n = draw(st.integers(1, max_types))
    names = [f"t{i}" for i in range(n)]
    types = {}
    for name in names:
        width = draw(st.integers(min_children, max_children))
        types[name] = draw(st.lists(st.sampled_from(names), min_size=width, max_size=width))
    depth = draw(st.integers(1, max_depth))
    return {"automaton": {"types": types, "root_type": names[0], "depth": depth}}


@composite
def forward_operators(draw, **kwargs):
    t = tree_service.build_tree(draw(automata(**kwargs)))
    rows = {
        name: {"forward": list(draw(shares(len(kids))))}
        for name, kids in t.automaton.types.items()
    }
    return operator_service.build_operator(t, {"rows": rows})


@composite
def transient_operators(draw, **kwargs):
    """Nearest-neighbour rows with back <= 1/3 and at least two children per type."""
    kwargs.setdefault("min_children", 2)
    t = tree_service.build_tree(draw(automata(**kwargs)))
    rows = {}
    for name, kids in t.automaton.types.items():
        back = draw(st.integers(1, 2))
        forward = draw(st.lists(st.integers(2, 4), min_size=len(kids), max_size=len(kids)))
        total = back + sum(forward)
        rows[name] = {
            "back": Fraction(back, total),
            "forward": [Fraction(w, total) for w in forward],
        }
    root_kids = t.automaton.types[t.automaton.root_type]
    root = {"forward": list(draw(shares(len(root_kids))))}
    return operator_service.build_operator(t, {"rows": rows, "root": root})


def _spread(draw, total: Fraction, k: int, delta: Fraction) -> list[Fraction]:
    # each share in [delta, 1/2 - delta] for k >= 3 and delta <= 1/10
    weights = draw(st.lists(st.integers(2, 3), min_size=k, max_size=k))
    rest = total - k * delta
    return [delta + rest * Fraction(w, sum(weights)) for w in weights]


@composite
def very_regular_operators(draw):
    """Operator with p >= δ on every edge and every coefficient <= 1/2 - δ, with its δ."""
    delta = draw(st.sampled_from([Fraction(1, n) for n in (20, 16, 12, 10)]))
    t = tree_service.build_tree(
        draw(automata(max_types=3, min_children=3, max_children=4, max_depth=4))
    )
    rows = {}
    for name, kids in t.automaton.types.items():
        back = delta + (Fraction(1, 2) - 2 * delta) * Fraction(draw(st.integers(0, 4)), 4)
        rows[name] = {"back": back, "forward": _spread(draw, 1 - back, len(kids), delta)}
    root_kids = t.automaton.types[t.automaton.root_type]
    root = {"forward": _spread(draw, Fraction(1), len(root_kids), delta)}
    return operator_service.build_operator(t, {"rows": rows, "root": root}), delta


@composite
def arc_functions(draw, t: Tree, max_generation: int = 3, values=small_fractions) -> ArcFunction:
    n = draw(st.integers(0, min(max_generation, t.depth)))
    return ArcFunction.from_arc_values(t, n, {u: draw(values) for u in t.frontier(n)})


@composite
def contours(draw, t: Tree, max_depth: int = 3) -> list:
    """Random cut sets: stop at each vertex below the root with some chance, always at max_depth."""
    limit = min(max_depth, t.depth)
    out, stack = [], list(reversed(t.children(())))
    while stack:
        v = stack.pop()
        if len(v) == limit or draw(st.booleans()):
            out.append(v)
        else:
            kids = t.children(v)
            if kids:
                stack.extend(reversed(kids))
            else:
                out.append(v)
    return out
