import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evansbound.cli import load_problem
from evansbound.problem import make_problem

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mathieu():
    return load_problem("mathieu")


@pytest.fixture(scope="session")
def fourth_order():
    return load_problem("fourth_order")


@pytest.fixture(scope="session")
def mkdv():
    return load_problem("mkdv")


@pytest.fixture(scope="session")
def laplacian():
    # -u'' on (0, pi), Dirichlet: eigenvalues k^2
    return make_problem(2, "pi", [("-1", 2, 0)], "dirichlet")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report ----------------------------------------------

CRITERIA: dict = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        if exc_type is AssertionError and str(exc):
            self.details.append(str(exc).splitlines()[0])
        elif exc_type is not None and exc_type is not AssertionError:
            self.details.append(f"{exc_type.__name__}: {exc}")
        CRITERIA[self.number] = (status, self.title, "; ".join(self.details))
        line = f"[{status}] criterion {self.number}: {self.title} | {CRITERIA[self.number][2]}"
        print(line)
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        status, title, detail = CRITERIA[k]
        terminalreporter.write_line(f"[{status}] criterion {k}: {title} | {detail}")
