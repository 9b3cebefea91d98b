import numpy as np
import pytest

from varcheck.expr import parse
from varcheck.trajectory import Problem

CV90 = "pow(abs(pow(x1,2)-pow(xd1,5)),2)*pow(abs(xdd1),22)+0.01*pow(xdd1,2)"
K_CV90 = (3 / 5) ** (5 / 3)

ACCEPTANCE_LINES = []


def make_problem(text, bc=(0.0, 1.0, 0.0, 0.0), a=0.0, b=1.0, n=1):
    x_a, x_b, xd_a, xd_b = ([v] if np.isscalar(v) else v for v in bc)
    return Problem.create(a, b, parse(text, n), x_a, x_b, xd_a, xd_b)


@pytest.fixture
def quadratic():
    return make_problem("pow(xdd1,2)")


@pytest.fixture
def cv90():
    return make_problem(CV90, (0.0, K_CV90, 0.0, 5 * K_CV90 / 3))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
