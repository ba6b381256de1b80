"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_outcomes: dict[int, tuple[str, bool, float]] = {}


def criterion(number: int, title: str):
    def mark(fn):
        fn.criterion = (number, title)
        return fn
    return mark


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = getattr(getattr(item, "function", None), "criterion", None)
    if crit is None:
        return
    number, title = crit
    _, ok, secs = _outcomes.get(number, (title, True, 0.0))
    if rep.when == "call":
        secs = rep.duration
    _outcomes[number] = (title, ok and not rep.failed, secs)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        title, ok, secs = _outcomes[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title} ({secs:.1f}s)")
