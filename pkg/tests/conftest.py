import numpy as np
import pytest


def _write_movielens(path, n_users=30, n_items=40, n_ratings=400, seed=0):
    rng = np.random.default_rng(seed)
    seen = set()
    lines = []
    while len(lines) < n_ratings:
        u, i = int(rng.integers(1, n_users + 1)), int(rng.integers(1, n_items + 1))
        if (u, i) in seen:
            continue
        seen.add((u, i))
        lines.append(f"{u}\t{i}\t{int(rng.integers(1, 6))}\t{874965758 + len(lines)}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def write_movielens():
    """Writer for small tab-separated ratings files in the MovieLens layout."""
    return _write_movielens


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _criteria[number] = (status, title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, secs = _criteria[number]
        terminalreporter.write_line(f"{number:2d} {status}  {title}  ({secs:.1f} s)")
