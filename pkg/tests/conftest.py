import math

import numpy as np
import pytest

from bernoulli_lab.exact import ExactSpec, realize

GRID = {"shape": (129, 129), "h": 1.0 / 64, "origin": (0.0, 0.0)}


@pytest.fixture(scope="session")
def half_plane_2d():
    spec = ExactSpec(kind="half_plane", e=np.array([0.0, 1.0]), b=1.0)
    return realize(spec, GRID["shape"], GRID["h"], GRID["origin"])


@pytest.fixture(scope="session")
def vee_2d():
    spec = ExactSpec(kind="vee", e=np.array([0.0, 1.0]),
                     y=np.array([1.0, 1.0]))
    return realize(spec, GRID["shape"], GRID["h"], GRID["origin"])


@pytest.fixture(scope="session")
def tilted_vee_2d():
    angle = 0.35
    e = np.array([math.sin(angle), math.cos(angle)])
    spec = ExactSpec(kind="vee", e=e, y=np.array([1.0, 1.0]))
    return realize(spec, GRID["shape"], GRID["h"], GRID["origin"]), e


@pytest.fixture(scope="session")
def step_2d():
    spec = ExactSpec(kind="one_d_step", e=np.array([0.0, 1.0]), b=1.0)
    return realize(spec, GRID["shape"], GRID["h"], GRID["origin"])


@pytest.fixture(scope="session")
def neck_3d():
    """Synthetic neck on a coarse 3D grid with the zero plane on a node row."""
    h = 1.0 / 24
    spec = ExactSpec(kind="synthetic_neck", e=np.array([0.0, 0.0, 1.0]),
                     y=np.array([1.0, 1.0, 1.0]), r_neck=8 * h)
    return realize(spec, (49, 49, 49), h, (0.0, 0.0, 0.0))
