import pytest

_RESULTS: dict = {}

CRITERIA = {
    1: "oracle equivalence with synchronous gradient descent",
    2: "optimization preset converges (median F ratio <= 0.01)",
    3: "consensus preset reaches the analytic minimum (median gap <= 0.05)",
    4: "delay-tail law and lossless delay bound",
    5: "gradients match central finite differences",
    6: "SPSA estimator exactness and bias shrinkage",
    7: "merge algebra against brute force",
    8: "assumption verifier discrimination",
    9: "byte-identical reruns",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    ok = _RESULTS.setdefault(n, True)
    if rep.failed or (rep.when == "call" and rep.skipped):
        _RESULTS[n] = False
    elif rep.when == "call" and not rep.passed:
        _RESULTS[n] = False
    _RESULTS[n] = _RESULTS[n] and ok


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status = "PASS" if _RESULTS[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {CRITERIA.get(n, '')}")
