from __future__ import annotations

from pathlib import Path

import pytest

from goalgraph.gdl import parse_declarations
from goalgraph.prompt import PromptAssets

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def assets() -> PromptAssets:
    return PromptAssets.load()


@pytest.fixture(scope="session")
def base_decls(assets):
    return assets.declarations()


@pytest.fixture(scope="session")
def asset_graph(base_decls):
    return base_decls.to_graph()


@pytest.fixture(scope="session")
def bathroom_program_text() -> str:
    return (FIXTURES / "bathroom_window_program.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def lamp_prefix() -> str:
    return (FIXTURES / "floor_lamp_partial.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def lamp_reply() -> str:
    return (FIXTURES / "floor_lamp_response.txt").read_text(encoding="utf-8")


@pytest.fixture
def parse():
    return parse_declarations


# ---------------------------------------------------------------- acceptance summary

_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        _criteria.append((props["criterion"], outcome, props.get("title", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, outcome, title in sorted(_criteria, key=lambda c: int(c[0])):
        terminalreporter.write_line(f"criterion {number:>2}: {outcome}  {title}")
