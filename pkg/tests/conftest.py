import json
from pathlib import Path

import numpy as np
import pytest

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


def bm_like(n_paths, grid, seed):
    """Standard Brownian paths on ``grid`` (H = 1/2), built from independent increments."""
    rng = np.random.default_rng(seed)
    dt = np.diff(grid.points)
    inc = rng.standard_normal((n_paths, dt.size)) * np.sqrt(dt)
    return np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
