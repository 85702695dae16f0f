import time

import numpy as np
import pytest

from erg_crane.cli import build_system, simulate
from erg_crane.config import bundled_config
from erg_crane.crane_model import CraneParams

# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params():
    return CraneParams()


@pytest.fixture(scope="session")
def system():
    return build_system(bundled_config())


@pytest.fixture(scope="session")
def governed(system):
    t0 = time.perf_counter()
    log = simulate(system, governed=True)
    log.meta["wall_time"] = time.perf_counter() - t0
    return log


@pytest.fixture(scope="session")
def ungoverned(system):
    return simulate(system, governed=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _run_cli(argv):
    from erg_crane.cli import main
    t0 = time.perf_counter()
    code = main(argv)
    return code, time.perf_counter() - t0


@pytest.fixture(scope="session")
def simulate_runs(tmp_path_factory):
    """Two independent ``simulate`` runs of the bundled configuration."""
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        code, wall = _run_cli(["simulate", "--out", str(out)])
        runs.append({"code": code, "out": out, "wall": wall})
    return runs


@pytest.fixture(scope="session")
def compare_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    code, wall = _run_cli(["compare", "--out", str(out)])
    return {"code": code, "out": out, "wall": wall}
