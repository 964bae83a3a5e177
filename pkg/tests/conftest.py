from functools import lru_cache

import pytest

from dcopf_bases.cases import load_problem


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", default=False, help="run large-case tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@lru_cache(maxsize=None)
def problem(name: str):
    return load_problem(name)


@pytest.fixture(scope="session")
def get_problem():
    return problem


# one line per acceptance criterion, printed at the end of the run
CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(name: str, ok: bool, detail: str) -> None:
        CRITERIA.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
