import numpy as np
import pytest

import graphbrackets  # noqa: F401  (enables float64)
from graphbrackets.topology import build_complex, erdos_renyi


def random_graph(rng, n_min=4, n_max=30, need_triangle=False):
    """Random graph with no isolated nodes, optionally with a triangle."""
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        prob = rng.uniform(0.15, 0.7)
        cx = erdos_renyi(n, prob, rng)
        if (cx.degrees() == 0).any():
            continue
        if need_triangle and cx.n_triangles == 0:
            continue
        return cx


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_graph():
    # six nodes, one triangle (1, 3, 4), a pendant edge at each end
    return build_complex(6, [(0, 1), (1, 2), (1, 3), (3, 4), (4, 1), (4, 5)])


@pytest.fixture
def dense_graph(rng):
    return random_graph(rng, 8, 12, need_triangle=True)


# criterion number -> (ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
