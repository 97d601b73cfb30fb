import pytest
from hypothesis import HealthCheck, settings

from hitlist6 import _pycore, kernels

# the backend fixtures hold no state, so sharing them across examples is fine
settings.register_profile("default", suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")

_BACKENDS = [_pycore]
if kernels.compiled() is not None:
    _BACKENDS.append(kernels.compiled())

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.fixture(params=_BACKENDS, ids=lambda m: m.BACKEND)
def backend(request):
    """Each available kernel module in turn."""
    return request.param


@pytest.fixture
def use_backend(backend, monkeypatch):
    """Route the library's kernel calls through ``backend``."""
    monkeypatch.setattr(kernels, "cluster_runs", backend.cluster_runs)
    monkeypatch.setattr(kernels, "dense_prefixes", backend.dense_prefixes)
    return backend


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    prev = _acceptance.get(number, (title, "PASS"))[1]
    if rep.when == "call" or failed:
        _acceptance[number] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, status = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
