import copy
import sys
from pathlib import Path

import pytest

from bladeenv.config import PipelineConfig
from bladeenv.oracle import SyntheticBladeOracle
from bladeenv.pipeline import run_pipeline

sys.path.insert(0, str(Path(__file__).parent))

DUAL = {
    "version": 1,
    "objectives": [{"label": "loss", "degree": 2}, {"label": "mass_flow", "degree": 1}],
}

# loss and mass flow, then the peak Mach block tuned in a five-value sweep
TUNING = {
    "version": 1,
    "objectives": [
        {"label": "loss", "degree": 2},
        {"label": "mass_flow", "degree": 1},
        {"label": "peak", "output": "mach", "degree": 1, "weights": {"region": "peak", "radius": 6}, "r_override": 2},
    ],
    "sweep": {"label": "peak", "index": 0, "values": [-0.4, -0.2, 0.0, 0.2, 0.4]},
}

# small sizes for tests that only exercise the plumbing
QUICK = {
    "training": {"n_train": 300, "n_validation": 100},
    "covariance": {"n_mc": 500},
    "sampler": {"h": 600, "burn_in": 200, "thinning": 2},
    "envelope": {"n_calibration": 400},
    "classify": {"n_test": 100},
}


def config(base, quick=False, **changes):
    raw = copy.deepcopy(base)
    if quick:
        raw.update(copy.deepcopy(QUICK))
    for key, value in changes.items():
        raw[key] = value
    return PipelineConfig.from_dict(raw)


@pytest.fixture(scope="session")
def oracle20():
    return SyntheticBladeOracle(d=20, seed=0)


@pytest.fixture(scope="session")
def tuning_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tuning") / "run"
    return run_pipeline(config(TUNING), str(out))


@pytest.fixture(scope="session")
def quick_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick") / "run"
    return run_pipeline(config(DUAL, quick=True), str(out))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
