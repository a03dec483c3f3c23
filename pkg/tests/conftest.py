import math
import time

import numpy as np
import pytest

from envdamp.harness import SCENARIOS, TrainingConfig, train_fits
from envdamp.segment import SegmentPolicy
from envdamp.signal_model import ModalMode, ModalSystem, synthesize_response

FS = 800.0
ACCEPTANCE_LINES = []
N = 4096


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_mode():
    return ModalMode(15.56, 0.01, 1.0)


@pytest.fixture
def single_record(single_mode):
    return synthesize_response(ModalSystem((single_mode,)), N, FS)


@pytest.fixture(scope="session")
def scenario1_training():
    """Desk-scale fits for all nine forms on scenario 1, mode index 1 (about 35 s)."""
    t0 = time.perf_counter()
    registry, fits = train_fits(SCENARIOS["scenario1"], None, TrainingConfig(), SegmentPolicy())
    return registry, {f.form.value: f for f in fits}, time.perf_counter() - t0


@pytest.fixture(scope="session")
def scenario1_fits(scenario1_training):
    return scenario1_training[0]


@pytest.fixture(scope="session")
def fits_file(scenario1_fits, tmp_path_factory):
    path = tmp_path_factory.mktemp("fits") / "fits.json"
    scenario1_fits.save(path)
    return path


def rel_err(a, b):
    return abs(a - b) / abs(b)


def natural(fd, zeta):
    return 2 * math.pi * fd / math.sqrt(1 - zeta ** 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
