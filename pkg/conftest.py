import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from trpcsim.trpc import MODES  # noqa: E402


@pytest.fixture
def mode_r10():
    return MODES["r10"]


@pytest.fixture
def mode_r250():
    return MODES["r250"]
