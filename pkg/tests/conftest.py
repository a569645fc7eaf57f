import pytest

from cmrect.rectifier import TABLE_I, build_rectifier, table1_models


@pytest.fixture(scope="session")
def models():
    return table1_models()


@pytest.fixture(scope="session")
def nmos(models):
    return models["CMOSN"]


@pytest.fixture(scope="session")
def pmos(models):
    return models["CMOSP"]


@pytest.fixture(scope="session")
def table1_text():
    return TABLE_I


@pytest.fixture(scope="session")
def rectifier_doc():
    return build_rectifier()


# one line per acceptance criterion, printed after the run
_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(number, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
