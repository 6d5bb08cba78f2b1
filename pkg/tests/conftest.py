import numpy as np
import pytest

from taxcal.acquisition import align_log
from taxcal.calibration import calibrate
from taxcal.config import RigConfig
from taxcal.session import simulate_session

NOISELESS = {"hall.noise_sigma": 0.0, "ft.noise_sigma": 0.0, "dome.hysteresis_tau": 0.0}
REALISTIC = {"dome.hysteresis_tau": 0.3}


def _run(overrides, seed):
    cfg = RigConfig(overrides)
    result = simulate_session(cfg, seed)
    datasets = align_log(result.log, 100)
    model, metrics = calibrate(datasets, seed=seed)
    return {"config": cfg, "result": result, "datasets": datasets, "model": model, "metrics": metrics}


@pytest.fixture(scope="session")
def noiseless_run():
    import time
    t0 = time.perf_counter()
    run = _run(NOISELESS, 0)
    run["elapsed"] = time.perf_counter() - t0
    return run


@pytest.fixture(scope="session")
def realistic_run():
    return _run(REALISTIC, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str = "") -> bool:
    """Remember one acceptance outcome for the end-of-run summary."""
    prev = ACCEPTANCE.get(criterion)
    ACCEPTANCE[criterion] = (bool(ok) and (prev is None or prev[0]), detail if prev is None or not ok else prev[1])
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
