"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from cardiowave.eikonal import ConductivityModel, build_conductivity
from cardiowave.mesh import axis_aligned_fibers, build_structured_slab


@pytest.fixture
def model():
    return ConductivityModel()


@pytest.fixture
def line_mesh():
    """Uniform 1D mesh of [0, 0.02] with 80 elements."""
    return build_structured_slab(1, [0.02], [80])


@pytest.fixture
def small_2d_mesh():
    return build_structured_slab(2, [0.004, 0.003], [4, 3])


def conductivity_along(mesh, model, axis=0):
    return build_conductivity(model, axis_aligned_fibers(mesh, axis))


def fit_speed(mesh, times, lo, hi, axis=0):
    """Inverse slope of a linear fit of arrival time over an interior window."""
    x = mesh.vertices[:, axis]
    sel = (x > lo) & (x < hi)
    slope = np.polyfit(x[sel], times[sel], 1)[0]
    return 1.0 / slope
