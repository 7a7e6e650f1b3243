import numpy as np
import pytest

from grpkmax import GroupedDesign


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_design(rng):
    matrix = rng.standard_normal((30, 12))
    y = matrix[:, :3] @ np.array([2.0, -1.5, 1.0]) + 0.1 * rng.standard_normal(30)
    return GroupedDesign.from_matrix(matrix, (4, 4, 4), y)


# results of tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "property: hypothesis property test")


def pytest_collection_modifyitems(config, items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker("property")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
