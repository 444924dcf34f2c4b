from typing import Optional

from pydantic import BaseModel, Field, computed_field

from models.tree import Vertex


class WalkRecord(BaseModel):
    """One simulated trajectory, stopped at the recording depth or the step cap."""

    path: list[Vertex]
    exit_arc: Optional[Vertex] = Field(
        None, description="First vertex of the recording depth hit, or a leaf; None on escape"
    )
    steps: int
    record_depth: int

    @computed_field
    @property
    def escaped(self) -> bool:
        return self.exit_arc is None


class ArcEstimate(BaseModel):
    arc: str
    vertex: Vertex
    count: int
    frequency: float
    stderr: float


class HittingEstimate(BaseModel):
    """Empirical exit distribution on the arcs of the recording depth."""

    start: str
    record_depth: int
    n_walks: int
    seed: int
    arcs: list[ArcEstimate] = Field(default_factory=list)
    escape_count: int = 0

    @property
    def escape_fraction(self) -> float:
        return self.escape_count / self.n_walks

    def frequency(self, v: Vertex) -> float:
        return next((a.frequency for a in self.arcs if a.vertex == v), 0.0)


class FirstPassageEstimate(BaseModel):
    start: str
    target: str
    n_walks: int
    seed: int
    hits: int
    escapes: int = Field(0, description="Walks declared escaped past the depth cut or step cap")
    frequency: float
    stderr: float


class ArcComparison(BaseModel):
    arc: str
    analytic: float
    empirical: float
    stderr: float
    within_3sigma: bool
