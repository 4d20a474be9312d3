import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from isodeform.bspline import TensorBasis, uniform_knots
from isodeform.geometry import identity_patch

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).resolve().parents[1] / "src" / "isodeform" / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def square_patch(degree=2, size=5):
    kv = uniform_knots(degree, size)
    return identity_patch(TensorBasis((kv, kv)))


def fold_patch():
    """Identity patch with two interior control columns swapped."""
    patch = square_patch(2, 6)
    grid = patch.grid.copy()
    grid[[2, 3]] = grid[[3, 2]]
    return patch.with_cps(grid.reshape(-1, 2))


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
