import pytest
from hypothesis import HealthCheck, settings

from services.boundary_measure import measure_service
from tests.helpers import binary, homogeneous, preset

settings.register_profile(
    "treeharmonic",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("treeharmonic")


@pytest.fixture
def binary_tree():
    return binary(depth=6)


@pytest.fixture
def binary_uniform(binary_tree):
    """Uniform forward operator on the binary tree and its arc measure."""
    q = preset(binary_tree, "forward_uniform")
    return q, measure_service.arc_measure_from_Q(q)


@pytest.fixture
def degree3():
    """Homogeneous tree of degree 3 with the isotropic walk."""
    t = homogeneous(2, depth=5)
    return t, preset(t, "isotropic")
