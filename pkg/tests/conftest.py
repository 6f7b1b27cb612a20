import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance_log.RESULTS):
        passed, detail = acceptance_log.RESULTS[number]
        terminalreporter.write_line(f"ACCEPTANCE [{'PASS' if passed else 'FAIL'}] {number:>2} {detail}")
