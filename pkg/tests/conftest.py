import pytest

from quickdetect import make_params, params_from_gamma, solve_boundary


@pytest.fixture(scope="session")
def ref_params():
    return make_params(2.0, 1.0, 1.0, 1.5, 0.4)


@pytest.fixture(scope="session")
def ref_solution(ref_params):
    return solve_boundary(ref_params)


@pytest.fixture(scope="session")
def base_params():
    """lambda = 2, gamma = 0.5, beta = 1, eps = 0."""
    return params_from_gamma(2.0, 0.5, 1.0, 0.0)


@pytest.fixture(scope="session")
def eps0_solution(base_params):
    return solve_boundary(base_params)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
