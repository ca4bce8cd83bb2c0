import pytest

from qkd_ir.ldpc.codeset import load_code_set

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the verdict of an acceptance criterion for the summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def code_set_4000():
    return load_code_set("N4000")


@pytest.fixture(scope="session")
def code_set_65536():
    return load_code_set("N65536")


@pytest.fixture(scope="session")
def code_set_1944():
    return load_code_set("N1944")
