import numpy as np
import pytest

from coopsgd.objectives import QuadraticSuite, linear_spectrum, make_quadratic

ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {mark}  {title}  {detail}".rstrip())


@pytest.fixture
def scalar_pair():
    """d=1, m=2 quadratic with b = (1, 3)."""
    return QuadraticSuite([[1.0]], [[1.0], [3.0]], 0.0)


@pytest.fixture
def iid_quadratic():
    return make_quadratic(20, 8, linear_spectrum(20, 0.1, 1.0), 0.0, 0, sigma=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_column_stochastic(rng, n, concentration=1.0):
    return rng.dirichlet(np.full(n, concentration), size=n).T
