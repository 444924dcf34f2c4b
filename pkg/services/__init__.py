from .boundary_measure import MeasureService, measure_service
from .montecarlo import WalkService, walk_service
from .operators import OperatorService, operator_service
from .reports import ReportService, report_service
from .tree_core import TreeService, tree_service
from .universality import UniversalityService, universality_service

__all__ = [
    "MeasureService",
    "measure_service",
    "OperatorService",
    "operator_service",
    "ReportService",
    "report_service",
    "TreeService",
    "tree_service",
    "UniversalityService",
    "universality_service",
    "WalkService",
    "walk_service",
]
