import numpy as np
import pytest

from confgeo import MetricField, trace_heart_boundary


@pytest.fixture(scope="session")
def euclid():
    return MetricField.euclidean(3)


@pytest.fixture(scope="session")
def sphere():
    return MetricField.sphere(3)


@pytest.fixture(scope="session")
def hyperbolic():
    return MetricField.hyperbolic(3)


@pytest.fixture(scope="session")
def euclid_heart(euclid):
    """Flat heart of domain radius 1/2, shared across the heavy tests."""
    return trace_heart_boundary(euclid, np.zeros(3), np.array([1.0, 0, 0]),
                                0.5, 32)
