import numpy as np
import pytest
from hypothesis import settings

from stripres.medium import MediumSpec, ModeBasis, Rectangle, free_medium

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

TWO_PI = 2.0 * np.pi


@pytest.fixture
def free():
    return free_medium()


@pytest.fixture
def rect():
    """Square inclusion of value 2 on a unit background, defect in the middle."""
    return MediumSpec(
        1.0,
        (Rectangle(0.25, 0.75, 0.25, 0.75, 2.0),),
        (Rectangle(0.3, 0.7, 0.3, 0.7, 1.0),),
    )


@pytest.fixture
def small_basis():
    return ModeBasis.symmetric(3, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
