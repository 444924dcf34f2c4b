from fractions import Fraction
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from models.tree import ROOT_CONE, Tree, Vertex

Scalar = Fraction | float


class Row(BaseModel):
    """Transition coefficients out of a vertex: to the father, then to each child."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    back: Scalar = Fraction(0)
    forward: tuple[Scalar, ...] = ()

    def total(self) -> Scalar:
        return self.back + sum(self.forward)

    def coefficients(self) -> tuple[Scalar, ...]:
        return (self.back, *self.forward)


class TransitionOperator(BaseModel):
    """Nearest-neighbour transition operator stored per cone type.

    ``root_row`` overrides the root's row when the root type is shared with
    non-root vertices (the root has no father).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tree: Tree
    rows: dict[str, Row]
    root_row: Optional[Row] = None

    def row(self, cone: str) -> Row:
        if cone == ROOT_CONE and self.root_row is not None:
            return self.root_row
        return self.rows[self.tree.cone_type(cone)]

    def row_at(self, v: Vertex) -> Row:
        return self.row(self.tree.cone_at(v))

    def coeff(self, u: Vertex, v: Vertex) -> Scalar:
        if u and v == u[:-1]:
            return self.row_at(u).back
        if v[:-1] == u and len(v) == len(u) + 1:
            return self.row_at(u).forward[v[-1]]
        return Fraction(0)

    def cones(self) -> list[str]:
        return ([ROOT_CONE] if self.root_row is not None else []) + list(self.rows)

    @property
    def kind(self) -> Literal["forward_only", "nearest_neighbor"]:
        backs = [r.back for t, r in self.rows.items() if t != ROOT_CONE]
        return "forward_only" if all(b == 0 for b in backs) else "nearest_neighbor"

    @property
    def is_forward_only(self) -> bool:
        return self.kind == "forward_only"

    @property
    def exact(self) -> bool:
        rows = list(self.rows.values()) + ([self.root_row] if self.root_row else [])
        return all(isinstance(c, Fraction) for r in rows for c in r.coefficients())

    def is_positive(self) -> bool:
        """Every edge carries positive probability in the direction the kind requires."""
        for cone in self.cones():
            row = self.row(cone)
            if any(c <= 0 for c in row.forward):
                return False
            is_root = cone == ROOT_CONE or (
                self.root_row is None and cone == self.tree.automaton.root_type
            )
            if self.kind == "nearest_neighbor" and not is_root and row.back <= 0:
                return False
        return True


class FirstPassageTable(BaseModel):
    """Descent probabilities U(v, v_-) per cone type.

    Values are exact zeros for forward-only operators and floats otherwise.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    descent: dict[str, Scalar]
    residual: float = 0.0
    iterations: int = 0
    truncation_dependent: bool = Field(
        False, description="Depth-D leaves of an explicit tree were made absorbing"
    )

    def down(self, tree: Tree, v: Vertex) -> Scalar:
        return self.descent[tree.type_at(v)]


class Contour(BaseModel):
    model_config = ConfigDict(frozen=True)

    vertices: frozenset[Vertex]
    interior: frozenset[Vertex]


class RegularityReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mode: Literal["very_regular", "product_decay"]
    is_member: bool
    delta: Optional[Fraction | float] = None
    epsilon: Optional[Fraction | float] = None
    witness: Optional[str] = Field(None, description="Type or vertex that decides the answer")
    ascent_certified: bool = Field(
        False, description="Forward coefficients are also <= 1/2 - δ, so U(v_-, v) <= 1 - ε"
    )
