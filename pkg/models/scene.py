from fractions import Fraction
from typing import Annotated, Any, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from core.numbers import Gaussian, parse_rational

Rational = Annotated[Fraction, BeforeValidator(parse_rational)]
Complex = Annotated[Gaussian, BeforeValidator(Gaussian.of)]


class AutomatonSpec(BaseModel):
    types: dict[str, list[str]] = Field(..., description="type -> ordered child types")
    root_type: str
    depth: int = Field(..., ge=0, description="Working depth D")


class TreeSpec(BaseModel):
    """Tree-description document: an explicit children map or a cone-type automaton."""

    explicit: Optional[dict[str, list[str]]] = None
    automaton: Optional[AutomatonSpec] = None
    depth: Optional[int] = Field(None, ge=0, description="Explicit trees only; defaults to height")

    @model_validator(mode="after")
    def _one_form(self) -> "TreeSpec":
        if (self.explicit is None) == (self.automaton is None):
            raise ValueError("tree needs exactly one of 'explicit' or 'automaton'")
        return self


class RowSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    back: Rational = Fraction(0)
    forward: list[Rational] = Field(default_factory=list)


class OperatorSpec(BaseModel):
    """Transition coefficients per cone type (per vertex name on explicit trees)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    preset: Optional[Literal["isotropic", "forward_uniform"]] = None
    rows: dict[str, RowSpec] = Field(default_factory=dict)
    root: Optional[RowSpec] = Field(None, description="Row of the root vertex, if it differs")


class MeasureSpec(BaseModel):
    """Arc measure by explicit masses or per-type child shares.

    Without either, the measure is the hitting distribution of the scene operator.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    masses: Optional[dict[str, Rational]] = None
    shares: Optional[dict[str, list[Rational]]] = None
    root_shares: Optional[list[Rational]] = None


class TaskSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    # universality
    horizon: int = Field(16, ge=1)
    seed_radius: int = Field(0, ge=0)
    seed_value: Complex = Gaussian(0)
    generations: Optional[list[int]] = None
    s: int = Field(3, ge=1)
    count: int = Field(3, ge=1)
    tol: Rational = Fraction(1, 1024)
    centers: list[int] = Field(default_factory=lambda: [1, 2])
    radius: Optional[Rational] = None

    # dirichlet
    contour: Optional[list[str]] = None
    contour_depth: int = Field(2, ge=1)
    boundary_values: dict[str, Complex] = Field(default_factory=dict)

    # operators / walks
    kernel_depth: int = Field(2, ge=0)
    record_depth: int = Field(2, ge=1)
    n_walks: int = Field(10_000, ge=1)
    start: str = "o"


class Scene(BaseModel):
    """Versioned JSON scene consumed by every CLI command."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: Literal[1] = 1
    tree: TreeSpec
    operator: Optional[OperatorSpec] = None
    measure: Optional[MeasureSpec] = None
    task: TaskSpec = Field(default_factory=TaskSpec)

    def with_depth(self, depth: int) -> "Scene":
        tree = self.tree
        if tree.automaton is not None:
            tree = tree.model_copy(
                update={"automaton": tree.automaton.model_copy(update={"depth": depth})}
            )
        else:
            tree = tree.model_copy(update={"depth": depth})
        return self.model_copy(update={"tree": tree})

    def task_update(self, **changes: Any) -> "Scene":
        changes = {k: v for k, v in changes.items() if v is not None}
        return self.model_copy(update={"task": self.task.model_copy(update=changes)})
