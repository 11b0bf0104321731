import numpy as np
import pytest
from hypothesis import settings

from qlrb.fem import build_mesh
from qlrb.truth import (
    SourceTerm,
    TimeGrid,
    TruthProblem,
    constant_reluctivity,
    exp_reluctivity,
    sine_source,
)

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def small_problem(n_elem=20, K=20, T=0.2, nonlinearity=None, source=None, u0=None):
    """Coarse instance of the exp-reluctivity benchmark, cheap enough for unit tests."""
    return TruthProblem(build_mesh(n_elem), TimeGrid.uniform(K, T),
                        nonlinearity or exp_reluctivity(), source or sine_source(12.0), u0,
                        (1.0, 5.5))


def heat_problem(n_elem, K, T, u0=None, source=None):
    return TruthProblem(build_mesh(n_elem), TimeGrid.uniform(K, T), constant_reluctivity(1.0),
                        source or SourceTerm(()), u0, (1.0, 5.5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_setup():
    """Coarse problem with its EIM and a nested N = 4 reduced model."""
    from qlrb.eim import build_bank, eim_build
    from qlrb.greedy import pod_greedy

    problem = small_problem(n_elem=30, K=40)
    eim = eim_build(build_bank(problem, np.linspace(1, 5.5, 10)), 0.0, 6)
    model = pod_greedy(problem, eim, np.linspace(1, 5.5, 9), eps_rb=0.0, N_max=4,
                       extend_to_N_max=True)
    return problem, eim, model


# -- acceptance report ----------------------------------------------------------

_REPORT: dict = {}


def record(criterion, title, ok, detail):
    """Store one PASS/FAIL line for the acceptance summary."""
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {title}: {detail}"
    _REPORT[str(criterion)] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(_REPORT, key=lambda c: (not c.isdigit(), int(c) if c.isdigit() else 0))
    for key in order:
        terminalreporter.write_line(_REPORT[key])
