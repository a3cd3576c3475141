import numpy as np
import pytest
from hypothesis import settings

from locality_lab.lattice import arc_predicate, build_circle_mesh, decompose

settings.register_profile("lab", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("lab")


@pytest.fixture
def circle64():
    return build_circle_mesh(64, 2 * np.pi)


@pytest.fixture
def quarter(circle64):
    return decompose(circle64, arc_predicate(0.0, np.pi / 2, 2 * np.pi))
