from __future__ import annotations

import pytest

_criteria: dict[str, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if not item.name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        label, _, text = doc.partition(" ")
        detail = dict(item.user_properties).get("detail", "")
        _criteria[label] = ("PASS" if report.passed else "FAIL", text, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda label: (int("".join(c for c in label if c.isdigit())), label)
    for label in sorted(_criteria, key=key):
        status, text, detail = _criteria[label]
        line = f"criterion {label:<3} {status}  {text}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
