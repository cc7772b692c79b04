import numpy as np
import pytest

from hystkin.dataset import CycleDataset
from hystkin.simulator import BacklashPlant, generate_dataset


def make_dataset(qs_per_cycle, gammas=None, q_min=-10.0, q_max=10.0):
    qs_per_cycle = [np.asarray(q, dtype=float) for q in qs_per_cycle]
    n = len(qs_per_cycle[0])
    cid = np.repeat(np.arange(len(qs_per_cycle)), n)
    step = np.tile(np.arange(n), len(qs_per_cycle))
    q = np.concatenate(qs_per_cycle)
    g = 2.0 * q if gammas is None else np.concatenate(gammas)
    return CycleDataset.from_arrays(cid, step, q, g, q_min, q_max)


@pytest.fixture(scope="session")
def pitch_data():
    plant = BacklashPlant.preset("pitch-like", noise_sigma=0.15, seed=3)
    return generate_dataset(plant, 9, 200)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the run summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
