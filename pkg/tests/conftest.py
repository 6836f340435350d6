from pathlib import Path

import pytest

from locksynth.lang import parse_program

CORPUS = Path(__file__).resolve().parents[1] / "src" / "locksynth" / "corpus"

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def load(name: str):
    return parse_program((CORPUS / name).read_text())


@pytest.fixture
def corpus():
    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
