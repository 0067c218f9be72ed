import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# filled by test_acceptance.py: criterion -> (passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def record_acceptance():
    def record(name, passed, detail=""):
        ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
