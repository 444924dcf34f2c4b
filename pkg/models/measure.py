from fractions import Fraction
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from models.function import ArcFunction
from models.operator import Scalar
from models.tree import ROOT_CONE, Tree, Vertex


class ArcMeasure(BaseModel):
    """Boundary measure given by the share of each child arc in its father's arc.

    mass(v) is the product of shares along [o, v]. Below a zero-mass arc the
    shares are uniform and carry no information.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tree: Tree
    shares: dict[str, tuple[Scalar, ...]]
    root_shares: Optional[tuple[Scalar, ...]] = None

    def child_shares(self, cone: str) -> tuple[Scalar, ...]:
        if cone == ROOT_CONE and self.root_shares is not None:
            return self.root_shares
        return self.shares[self.tree.cone_type(cone)]

    def mass(self, v: Vertex) -> Scalar:
        m: Scalar = Fraction(1)
        cone = ROOT_CONE
        for i in v:
            m = m * self.child_shares(cone)[i]
            cone = self.tree.child_cones(cone)[i]
        return m

    def masses(self, depth: int) -> dict[Vertex, Scalar]:
        out: dict[Vertex, Scalar] = {(): Fraction(1)}
        for v in self.tree.ball(depth):
            if not v:
                continue
            share = self.child_shares(self.tree.cone_at(v[:-1]))[v[-1]]
            out[v] = out[v[:-1]] * share
        return out

    @property
    def exact(self) -> bool:
        values = [s for shares in self.shares.values() for s in shares]
        values += list(self.root_shares or ())
        return all(isinstance(s, Fraction) for s in values)


class BoundaryMartingale(BaseModel):
    """Levels h_0, ..., h_D; level n is constant on the arcs of generation n."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    levels: list[ArcFunction]
    tail_constant: bool = Field(True, description="Levels beyond D repeat the last one")


class MartingaleCheck(BaseModel):
    ok: bool
    level: Optional[int] = None
    vertex: Optional[str] = None
    expected: Optional[str] = None
    found: Optional[str] = None
