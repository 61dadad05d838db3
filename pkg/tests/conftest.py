import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Record one acceptance line: ``record(criterion, passed, detail)``."""

    def _record(n: int, passed: bool, detail: str = ""):
        _ACCEPTANCE[n] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bundled_runs(tmp_path_factory):
    """Every bundled experiment, solved once per test session."""
    from equiharm.config import bundled_config_names, bundled_config_path, load_config
    from equiharm.experiment import run_experiment

    out = tmp_path_factory.mktemp("bundled")
    runs = {}
    start = time.perf_counter()
    for name in bundled_config_names():
        cfg = load_config(bundled_config_path(name))
        runs[name] = run_experiment(cfg, out / name)
    return runs, time.perf_counter() - start
