import pytest

from fairdyn.dist import SubgroupDistribution as SD
from fairdyn.popmodel import GroupSpec


def uniform_groups():
    ga = GroupSpec.from_label0(0.8, SD.uniform(-5, 20), SD.uniform(10, 35))
    gb = GroupSpec.from_label0(0.2, SD.uniform(3, 25), SD.uniform(17, 45))
    return ga, gb


def truncnormal_groups():
    ga = GroupSpec.from_label0(0.4, SD.truncated_normal(4, 5, -8, 19), SD.truncated_normal(20, 6, 5, 35))
    gb = GroupSpec.from_label0(0.6, SD.truncated_normal(8, 3, -6, 25), SD.truncated_normal(27, 6, 9, 43))
    return ga, gb


@pytest.fixture
def uniform():
    return uniform_groups()


@pytest.fixture
def truncnormal():
    return truncnormal_groups()


# one line per acceptance criterion, filled by test_acceptance and echoed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
