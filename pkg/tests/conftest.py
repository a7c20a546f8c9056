import os

import pytest

from opencurrents import QubitParams, build_qubit, steady_state


def pytest_collection_modifyitems(config, items):
    if os.environ.get("OPENCURRENTS_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="extended run; set OPENCURRENTS_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("OPENCURRENTS_CACHE", str(tmp_path / "cache"))


@pytest.fixture
def driven_qubit():
    sys = build_qubit(QubitParams(Omega=0.7, gamma_down=1.0, gamma_up=0.5))
    return sys, steady_state(sys)


@pytest.fixture
def pumped_qubit():
    sys = build_qubit(QubitParams())
    return sys, steady_state(sys)


_CRITERIA: dict[str, str] = {}


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""

    def _report(number, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[str(number)] = line
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.split("-")[0]), k)):
        terminalreporter.write_line(_CRITERIA[key])
