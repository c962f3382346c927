from pathlib import Path

import pytest

from bkbsearch.model import parse_bkb

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
FIGURE3 = FIXTURES / "figure3.bkb"


@pytest.fixture
def fig3():
    return parse_bkb(FIGURE3.read_text())


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
