import numpy as np
import pytest

from vcprune.dataio import Dataset, to_libsvm

_criteria = {}


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    entry = _criteria.setdefault(number, {"title": dict(report.user_properties)["title"],
                                          "outcome": "passed", "detail": ""})
    if report.when == "call" or report.outcome != "passed":
        if report.skipped:
            entry["outcome"] = "skipped"
        elif report.failed:
            entry["outcome"] = "failed"
    detail = dict(report.user_properties).get("detail")
    if detail:
        entry["detail"] = detail


@pytest.fixture(autouse=True)
def _criterion_properties(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", marker.args[0])
        record_property("title", marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[e["outcome"]]
        line = f"[{status}] criterion {number}: {e['title']}"
        if e["detail"]:
            line += f" | {e['detail']}"
        terminalreporter.write_line(line)


def blob_dataset(n=150, k=3, d=6, seed=0, spread=2.5):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, size=n)
    X = rng.normal(size=(n, d)) + spread * np.eye(k, d)[y]
    return Dataset(X, y, k, {float(c + 1): c for c in range(k)})


@pytest.fixture
def libsvm_file(tmp_path):
    path = tmp_path / "blobs.libsvm"
    path.write_text(to_libsvm(blob_dataset()))
    return path
