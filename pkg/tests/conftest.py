import numpy as np
import pytest

from autolabel3d.scene import CameraCalibration

_CRITERIA = {}


def record_criterion(number, name, ok, detail=""):
    """Store the outcome of an acceptance criterion for the end-of-run summary."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    _CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_calib(view_id="cam0", yaw=0.0, width=640, height=480, f=500.0, drop=0.5, index=0):
    """Forward-looking pinhole camera ``drop`` metres below the LiDAR, turned by ``yaw``."""
    c, s = np.cos(yaw), np.sin(yaw)
    fwd = np.array([c, s, 0.0])
    right = np.array([s, -c, 0.0])
    down = np.array([0.0, 0.0, -1.0])
    R = np.stack([right, down, fwd])
    t = -R @ np.array([0.0, 0.0, -drop])
    return CameraCalibration(view_id, R, t, f, f, width / 2, height / 2, width, height, index)


@pytest.fixture
def calib():
    return make_calib()
