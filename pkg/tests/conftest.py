import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "state": "PASS", "ran": False, "notes": []})
    if rep.when == "call":
        entry["ran"] = True
        entry["notes"] += [v for k, v in item.user_properties if k == "summary"]
    if rep.failed:
        entry["state"] = "FAIL"
    elif rep.skipped and entry["state"] == "PASS":
        entry["state"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        state = e["state"] if e["ran"] or e["state"] != "PASS" else "SKIP"
        line = f"criterion {number:>2}: {state}  {e['title']}"
        if e["notes"]:
            line += "  (" + "; ".join(e["notes"]) + ")"
        terminalreporter.write_line(line)
