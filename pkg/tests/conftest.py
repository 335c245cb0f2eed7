import functools

import numpy as np
import pytest
from hypothesis import settings

from elastic_membrane.geometry import make_torus, torus_grid

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

CLIFFORD_A = float(np.sqrt(2.0))

# acceptance results: criterion -> list of (ok, detail)
ACCEPTANCE: dict[int, list] = {}


@functools.lru_cache(maxsize=None)
def torus(a: float, n: int, r: float = 1.0):
    grid = torus_grid(n, n, a, r)
    return make_torus(a, r, grid)


@pytest.fixture(scope="session")
def torus2_64():
    return torus(2.0, 64)


@pytest.fixture(scope="session")
def torus2_32():
    return torus(2.0, 32)


@pytest.fixture(scope="session")
def clifford_64():
    return torus(CLIFFORD_A, 64)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        tr.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
