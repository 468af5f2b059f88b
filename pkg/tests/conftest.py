import numpy as np
import pytest

import geoflat as gf


@pytest.fixture(scope="session")
def rocket():
    return gf.make_rocket()


@pytest.fixture(scope="session")
def manipulator():
    return gf.make_manipulator()


@pytest.fixture(scope="session")
def quadrotor():
    return gf.make_quadrotor()


@pytest.fixture(scope="session")
def all_systems(rocket, manipulator, quadrotor):
    return [rocket, manipulator, quadrotor]


def random_group(system, rng, scale=2.0):
    return gf.GroupElement(system.group_kind,
                           rng.normal(0.0, scale, size=system.group_dim))


def span_residual(A, B):
    """Largest principal-angle sine between the column spans of A and B."""
    from scipy.linalg import subspace_angles
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] != B.shape[1]:
        return 1.0
    angles = subspace_angles(A, B)
    return float(np.max(np.sin(angles))) if angles.size else 0.0
