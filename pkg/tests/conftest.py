import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_acceptance = []


@pytest.fixture
def data_dir():
    return DATA


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance.append((report.nodeid.split("::")[-1], status))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance:
        terminalreporter.write_line(f"[{status}] {name}")
