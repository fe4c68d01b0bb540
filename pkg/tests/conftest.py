import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossplan.geometry import IntersectionConfig, build_intersection


@pytest.fixture(scope="session")
def default_model():
    return build_intersection(IntersectionConfig())
