import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Print one PASS/FAIL line per acceptance criterion as it finishes."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or item.module.__name__ != "test_acceptance":
        return
    label = getattr(item.function, "_criterion", None)
    if label is not None:
        status = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {status}: {label}", flush=True)
