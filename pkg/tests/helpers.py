import json
from pathlib import Path
from typing import Any

from models.operator import TransitionOperator
from models.tree import Tree
from services.operators import operator_service
from services.tree_core import tree_service


def automaton(types: dict[str, list[str]], root_type: str, depth: int) -> Tree:
    return tree_service.build_tree(
        {"automaton": {"types": types, "root_type": root_type, "depth": depth}}
    )


def homogeneous(q: int, depth: int = 6) -> Tree:
    """Every vertex has q + 1 neighbours: the root q + 1 children, the rest q."""
    return automaton({"r": ["b"] * (q + 1), "b": ["b"] * q}, "r", depth)


def binary(depth: int = 6) -> Tree:
    return automaton({"b": ["b", "b"]}, "b", depth)


def preset(t: Tree, name: str) -> TransitionOperator:
    return operator_service.build_operator(t, {"preset": name})


def ray_operator(t: Tree) -> TransitionOperator:
    """Forward-only, all mass on the first child."""
    rows = {
        name: {"forward": [1] + [0] * (len(kids) - 1)}
        for name, kids in t.automaton.types.items()
    }
    return operator_service.build_operator(t, {"rows": rows})


def write_scene(path: Path, doc: dict[str, Any]) -> Path:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path
