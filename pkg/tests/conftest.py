import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from Stages.FdtdStage import Fdtd


@pytest.fixture(autouse=True)
def fresh_reference_cache():
    Fdtd.clear_reference_cache()
    yield
    Fdtd.clear_reference_cache()
