from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from n2l.imageio import load_image

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def natural_64():
    return load_image(DATA / "natural_64.png")


@pytest.fixture(scope="session")
def natural_256():
    return load_image(DATA / "natural_256.png")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
