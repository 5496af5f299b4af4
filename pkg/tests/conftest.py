import os

import pytest
from hypothesis import HealthCheck, settings

from loopsoup.graph import TorusSpec, build_torus, complete_graph, cycle_graph

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: list[str] = []


@pytest.fixture
def k4():
    return complete_graph(4, 0.15)


@pytest.fixture
def c3():
    return cycle_graph(3, 0.2)


def torus(d, n, x):
    return build_torus(TorusSpec.homogeneous(d, n, x))


@pytest.fixture
def record():
    """Collects one summary line per acceptance criterion."""
    def _add(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
    return _add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
