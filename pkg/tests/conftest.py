import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tiltlink.model import RobotModel
from tiltlink.planner import optimize_vectoring

CANONICAL_FORMS = {
    "normal": np.array([np.pi / 2, np.pi / 2, np.pi / 2]),
    "s1": np.array([-np.pi / 2, 0.0, np.pi / 2]),
    "s2": np.array([0.0, 0.0, 0.0]),
    "corner": np.array([0.11, 0.11, 0.11]),
}


@pytest.fixture(scope="session")
def model():
    return RobotModel()


@pytest.fixture(scope="session")
def canonical_plans(model):
    """Global vectoring solves for the four canonical forms, reused widely."""
    return {
        name: optimize_vectoring(model, q) for name, q in CANONICAL_FORMS.items()
    }
