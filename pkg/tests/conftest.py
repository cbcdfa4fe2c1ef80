import numpy as np
import pytest

from gazequality.core import GazeAngles, Recording, TargetStep, Task, angles_to_vectors
from gazequality.oracle import OracleConfig, generate_grid_recording, generate_saccades_recording
from gazequality.preprocessing import FixationSegment


def make_recording(angles, timestamps=None, targets=(), valid=None, task=Task.RANDOM_SACCADES, subject="S", rate=30.0):
    """Recording from an (n, 2) array of gaze angles."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    n = len(angles)
    if timestamps is None:
        timestamps = np.arange(n) * 1000.0 / rate
    if valid is None:
        valid = np.ones(n, dtype=bool)
    return Recording(subject, task, timestamps, angles_to_vectors(angles), valid, tuple(targets), nominal_rate=rate)


def make_segment(angles, target=(0.0, 0.0), subject="S", step=0):
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    return FixationSegment(subject, GazeAngles(*target), np.arange(len(angles)) * 1000 / 30, angles, step)


def steps(positions, dwell=1000.0):
    return tuple(
        TargetStep(i * dwell, (i + 1) * dwell, GazeAngles(float(x), float(y))) for i, (x, y) in enumerate(positions)
    )


@pytest.fixture(scope="session")
def clean_saccades():
    return generate_saccades_recording(OracleConfig(seed=7))[0]


@pytest.fixture(scope="session")
def clean_grid():
    return generate_grid_recording(OracleConfig(seed=7))[0]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get(f"{__package__}.test_acceptance") if __package__ else None
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(n))
