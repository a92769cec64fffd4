import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None)
settings.load_profile("default")

CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    detail = dict(item.user_properties).get("detail", "" if rep.passed else "did not complete; see traceback")
    item.config.stash[CRITERIA].append((mark.args[0], mark.args[1], status, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash[CRITERIA])
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, status, detail in rows:
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}: {detail}")
