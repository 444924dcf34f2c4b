from .artifact import Artifact, ArtifactStatus, ArtifactType, InvariantCheck, RunReport
from .function import ArcFunction, Sector, TreeFunction
from .measure import ArcMeasure, BoundaryMartingale, MartingaleCheck
from .operator import Contour, FirstPassageTable, RegularityReport, Row, TransitionOperator
from .scene import Scene
from .tree import ROOT_CONE, ConeTypeAutomaton, Tree, Vertex, VertexOrdering
from .universality import (
    RulerSequence,
    TargetFamily,
    TargetMember,
    UniversalityCertificate,
)
from .walk import FirstPassageEstimate, HittingEstimate, WalkRecord

__all__ = [
    "Artifact",
    "ArtifactStatus",
    "ArtifactType",
    "InvariantCheck",
    "RunReport",
    "ArcFunction",
    "Sector",
    "TreeFunction",
    "ArcMeasure",
    "BoundaryMartingale",
    "MartingaleCheck",
    "Contour",
    "FirstPassageTable",
    "RegularityReport",
    "Row",
    "TransitionOperator",
    "Scene",
    "ROOT_CONE",
    "ConeTypeAutomaton",
    "Tree",
    "Vertex",
    "VertexOrdering",
    "RulerSequence",
    "TargetFamily",
    "TargetMember",
    "UniversalityCertificate",
    "FirstPassageEstimate",
    "HittingEstimate",
    "WalkRecord",
]
