import re

import pytest

CRITERIA = {
    1: "covariance fidelity",
    2: "2-variation limit",
    3: "joint (H, sigma) estimator",
    4: "exact algebraic cases",
    5: "known-parameter drift rate",
    6: "plug-in drift estimator",
    7: "fBm contrast",
    8: "rate tables",
    9: "d(H) calibration stability",
    10: "reproducibility",
}

_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")
_outcomes: dict = {}


@pytest.fixture(scope="session")
def noise_cache(tmp_path_factory):
    """Disk cache shared by every acceptance ensemble in the session."""
    return tmp_path_factory.mktemp("noise-cache")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    if report.failed:
        _outcomes[k] = ("FAIL", detail)
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(k, ("PASS", detail))
    elif report.skipped:
        _outcomes.setdefault(k, ("SKIP", detail))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k, name in CRITERIA.items():
        status, detail = _outcomes.get(k, ("not run", ""))
        line = f"criterion {k:2d} {name:<28s} {status}"
        tr.write_line(f"{line}  {detail}" if detail else line)
