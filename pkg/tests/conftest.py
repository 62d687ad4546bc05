import numpy as np
import pytest

from ellrisk.generators import GeneratorFamily

# published illustration parameters
MU6 = np.array([1.2, 0.7, 3.0])
SIGMA6 = np.array([[1.33, -0.067, 2.63], [-0.067, 0.25, -0.50], [2.63, -0.50, 5.76]])
MU7 = 1e-3 * np.array([-1.140677, 5.896240, 2.107343])
SIGMA7 = 1e-4 * np.array([[19.088935, 12.503116, -3.720492],
                          [12.503116, 20.268816, -3.162601],
                          [-3.720492, -3.162601, 8.851913]])

FAMILIES = [
    GeneratorFamily.normal(),
    GeneratorFamily.student_t(6.0),
    GeneratorFamily.logistic(),
    GeneratorFamily.laplace(),
    GeneratorFamily.pearson7(5.0),
]


@pytest.fixture(params=FAMILIES, ids=lambda f: f.name)
def family(request):
    return request.param


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.5 * np.eye(n)


_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
