import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stratrd import study_from_rows

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

EXAMPLE1_ROWS = [
    [8, 2, 8, 9, 3, 11, 2, 2, 10, 2],
    [6, 6, 10, 7, 24, 3, 1, 5, 22, 14],
    [0, 1, 3, 8, 11, 1, 0, 6, 7, 11],
]

# group 1 is the CRT design, group 2 the VST design (the difference is
# defined as CRT minus VST)
EXAMPLE2_ROWS = [
    [7, 0, 0, 0, 0, 9, 3, 7, 2, 1],
    [6, 2, 2, 0, 0, 11, 4, 3, 1, 2],
]


@pytest.fixture(scope="session")
def example1():
    return study_from_rows(EXAMPLE1_ROWS)


@pytest.fixture(scope="session")
def example2():
    return study_from_rows(EXAMPLE2_ROWS)


@pytest.fixture(scope="session")
def example1_csv():
    return str(DATA_DIR / "example1.csv")


@pytest.fixture(scope="session")
def example2_csv():
    return str(DATA_DIR / "example2.csv")
