import pytest

from cauchy_mann.problems import problem_harmonic, problem_nonharmonic, rect_mesh


@pytest.fixture(scope="session")
def harmonic():
    return problem_harmonic()


@pytest.fixture(scope="session")
def nonharmonic():
    return problem_nonharmonic()


@pytest.fixture(scope="session")
def mesh17():
    return rect_mesh(17)


@pytest.fixture(scope="session")
def mesh33():
    return rect_mesh(33)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(RESULTS, key=lambda c: int(c[1:])):
            terminalreporter.write_line(RESULTS[cid])
