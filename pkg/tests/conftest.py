import pytest

from wardcart.arena import default_map
from wardcart.vision.camera import CameraModel
from wardcart.vision.glyphs import default_templates


@pytest.fixture(scope="session")
def track():
    return default_map()


@pytest.fixture(scope="session")
def cam():
    return CameraModel()


@pytest.fixture(scope="session")
def templates():
    return default_templates()
