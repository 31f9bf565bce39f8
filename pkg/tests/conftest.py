import pytest

from neurokey.key_manager import PipelineConfig, enroll
from tests.helpers import subject_record


@pytest.fixture(scope="session")
def base_record():
    return subject_record(3)


@pytest.fixture(scope="session")
def enrolled(base_record):
    return enroll(base_record, PipelineConfig(), seed=7)


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
