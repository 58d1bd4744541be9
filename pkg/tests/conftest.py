import numpy as np
import pytest

from monodream.sensors import RenderCache, SensorConfig
from monodream.world import WorldConfig, box_plan, generate_floorplan


@pytest.fixture(scope="session")
def plan():
    return generate_floorplan(3, WorldConfig())


@pytest.fixture(scope="session")
def plan3x3():
    return generate_floorplan(11, WorldConfig(rows=3, cols=3))


@pytest.fixture(scope="session")
def square_room():
    return box_plan(4.0, 4.0)


@pytest.fixture(scope="session")
def cache(plan, square_room):
    c = RenderCache(SensorConfig())
    c.register(plan)
    c.register(square_room)
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary ------------------------------------------------------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to a numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "notes": []})
    entry["ok"] &= rep.passed
    if rep.when == "call" or not rep.passed:
        entry["notes"] += [str(v) for k, v in item.user_properties if k == "detail"]
        if not rep.passed:
            entry["notes"].append(f"{item.name} {'xfail' if hasattr(rep, 'wasxfail') else rep.outcome}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        notes = "; ".join(dict.fromkeys(entry["notes"]))
        verdict = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {number}: {entry['title']}" + (f" ({notes})" if notes else ""))
