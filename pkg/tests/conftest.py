import sys
from pathlib import Path

import pytest

from zsflow import numcore as nc

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def clean_tape():
    """Every test starts and ends with an empty tape."""
    nc.reset_tape()
    yield
    nc.reset_tape()
