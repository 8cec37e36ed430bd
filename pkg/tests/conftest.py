from __future__ import annotations

import pytest

from tablescene.layout import BoxSize, ObjectInstance, Position, RegionRect, SceneLayout

_criteria: dict[int, tuple[str, list[str]]] = {}


def make_obj(oid, x, y, z=0.0, w=10.0, d=10.0, h=10.0, rot=0.0, desc=None):
    return ObjectInstance(oid, desc or oid.lower(), Position(x, y, z), BoxSize(w, d, h), rot)


def make_layout(*objects, region=(0.0, 0.0, 100.0, 100.0), zones=()):
    return SceneLayout(RegionRect(*region), tuple(objects), tuple(RegionRect(*z) for z in zones))


@pytest.fixture
def region100():
    return RegionRect(0.0, 0.0, 100.0, 100.0)


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        for key, value in report.user_properties:
            if key == "criterion":
                number, title = value
                _criteria.setdefault(number, (title, []))[1].append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", (mark.args[0], mark.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
