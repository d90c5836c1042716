import sys
from pathlib import Path

import numpy as np
import pytest

from splitdiag import load_csv

DATA = Path(__file__).parent / "data"
ABALONE_CSV = DATA / "abalone.csv"
DIAMONDS_CSV = DATA / "diamonds.csv.gz"
ABALONE_FORMULA = "Rings ~ LongestShell + Diameter + Height"
DIAMONDS_FORMULA = "price ~ volume + depth"


@pytest.fixture(scope="session")
def abalone():
    return load_csv(ABALONE_CSV)


@pytest.fixture(scope="session")
def diamonds():
    return load_csv(DIAMONDS_CSV).with_derived("volume", "x:y:z")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
