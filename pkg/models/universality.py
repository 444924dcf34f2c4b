from fractions import Fraction
from math import factorial
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from core.numbers import Gaussian
from models.function import ArcFunction, TreeFunction
from models.measure import ArcMeasure
from models.operator import TransitionOperator
from models.tree import HDistance, Tree, Vertex


class RulerSequence(BaseModel):
    """ℓ(k) = 2-adic valuation of k plus one; r_k = ℓ(1) + ... + ℓ(k)."""

    model_config = ConfigDict(frozen=True)

    @staticmethod
    def ell(k: int) -> int:
        if k < 1:
            raise ValueError("ruler index starts at 1")
        return (k & -k).bit_length()

    @staticmethod
    def r(k: int) -> int:
        if k < 0:
            raise ValueError("ruler index must be >= 0")
        # each k contributes one plus its number of trailing zeros
        return 2 * k - k.bit_count()

    @staticmethod
    def count(n: int, m: int) -> int:
        """|{k <= 2^n : ℓ(k) = m}|."""
        if n < 0 or m < 1:
            raise ValueError("need n >= 0 and m >= 1")
        total = 1 << n
        return total // (1 << (m - 1)) - total // (1 << m)


class TargetMember(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    j: int = Field(..., ge=1)
    level: int
    generation: int
    function: ArcFunction


class TargetFamily(BaseModel):
    """Enumeration of step functions with Gaussian-rational grid values.

    Level L holds the functions constant on arcs of generation min(L-1, D) with
    values a/L! + i b/L!, |a|, |b| <= L*L!. Levels are listed one after the
    other; inside a level the arcs (in lexicographic order) are the digits of
    a mixed-radix counter, the first arc least significant.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tree: Tree

    def generation(self, level: int) -> int:
        return min(level - 1, self.tree.depth)

    @staticmethod
    def grid_size(level: int) -> int:
        return 2 * level * factorial(level) + 1

    @staticmethod
    def grid_value(level: int, index: int) -> Fraction:
        # zig-zag: 0, +1, -1, +2, -2, ...
        a = (index + 1) // 2
        return Fraction(a if index % 2 else -a, factorial(level))

    @staticmethod
    def grid_index(level: int, value: Fraction) -> Optional[int]:
        a = value * factorial(level)
        if a.denominator != 1 or abs(a) > level * factorial(level):
            return None
        a = int(a)
        return 2 * a - 1 if a > 0 else -2 * a

    def level_size(self, level: int) -> int:
        arcs = self.tree.frontier_size(self.generation(level))
        return (self.grid_size(level) ** 2) ** arcs

    def arcs(self, level: int) -> list[Vertex]:
        return list(self.tree.frontier(self.generation(level)))

    def member(self, j: int) -> TargetMember:
        if j < 1:
            raise ValueError("target index starts at 1")
        index, level = j - 1, 1
        while index >= self.level_size(level):
            index -= self.level_size(level)
            level += 1
        g = self.grid_size(level)
        values = {}
        for u in self.arcs(level):
            index, digit = divmod(index, g * g)
            values[u] = Gaussian(
                self.grid_value(level, digit % g), self.grid_value(level, digit // g)
            )
        n = self.generation(level)
        function = ArcFunction.from_arc_values(self.tree, n, values)
        return TargetMember(j=j, level=level, generation=n, function=function)

    def locate(self, f: ArcFunction, max_level: int = 6) -> Optional[int]:
        """Smallest j with f_j = f, searching levels up to max_level."""
        start = 1
        for level in range(1, max_level + 1):
            index = self._index_in_level(f, level)
            if index is not None:
                return start + index
            start += self.level_size(level)
        return None

    def _index_in_level(self, f: ArcFunction, level: int) -> Optional[int]:
        g = self.grid_size(level)
        index, weight = 0, 1
        for u in self.arcs(level):
            node = f.at(u)
            if not node.is_leaf:
                return None
            value = Gaussian.of(node.value)
            re, im = self.grid_index(level, value.re), self.grid_index(level, value.im)
            if re is None or im is None:
                return None
            index += (re + g * im) * weight
            weight *= g * g
        return index


class ExtensionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: TreeFunction
    radius: int = Field(..., description="h equals g on B_radius")
    m_out: int
    k: int
    dist_nu: Fraction | float
    bound: Fraction
    chains: dict[str, list[Vertex]] = Field(
        default_factory=dict, description="cone type at depth radius -> relative chain"
    )


class CertificateStep(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    r_k: int
    ell: int
    target_j: int
    generation: int
    dist_nu: Fraction | float
    radius: Fraction
    ok: bool


class UniversalityCertificate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    horizon: int
    offset: int = Field(..., description="Seed radius N; step k lands on generation N + r_k")
    steps: list[CertificateStep] = Field(default_factory=list)
    harmonic_residual: Fraction | float = Fraction(0)
    seed_preserved: bool = True

    @property
    def ok(self) -> bool:
        return self.seed_preserved and self.harmonic_residual == 0 and all(
            s.ok for s in self.steps
        )


class Visit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    target_j: int
    generation: int
    dist_nu: Fraction | float
    radius: Fraction


class Approximant(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: TreeFunction
    radius: int = Field(..., description="h equals g on B_radius")
    distance: HDistance
    visits: list[Visit] = Field(default_factory=list)


class VisitReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    visits: list[int]
    lower_density: Fraction
    upper_density: Fraction
    window: tuple[int, int]


class DisjointnessAudit(BaseModel):
    ok: bool
    pairs: list[dict] = Field(default_factory=list)


class CompanionOperator(BaseModel):
    """Forward-only operator whose boundary measure is the walk's hitting distribution.

    Hitting shares are rounded to rationals; share_error is the largest rounding.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    q: TransitionOperator
    measure: ArcMeasure
    share_error: float = 0.0


class TransferResult(BaseModel):
    """A frequently universal function built for the companion and carried back."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: TreeFunction = Field(..., description="Harmonic for the nearest-neighbour operator")
    companion_h: TreeFunction
    companion: CompanionOperator
    certificate: UniversalityCertificate
    generation: int = Field(..., description="Generation of the transferred boundary values")
    harmonic_residual: float
    root_gap: float
    seed_gap: float
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.certificate.ok
            and self.harmonic_residual <= self.tol
            and self.root_gap <= self.tol
            and self.seed_gap <= self.tol
        )
