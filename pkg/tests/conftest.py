import numpy as np
import pytest

from eventvelo.geometry import CameraExtrinsics, CameraIntrinsics, CameraModel
from eventvelo.pipeline import run_pipeline
from eventvelo.simulator import default_scene, render_events

_ACCEPTANCE = {}


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def identity_camera(fx=1000.0, ox=640.0, oy=360.0, T=(0, 0, 0)) -> CameraModel:
    return CameraModel(CameraIntrinsics(fx, fx, ox, oy, 1280, 720),
                       CameraExtrinsics(np.eye(3), np.asarray(T, dtype=float)))


class SceneRun:
    """Default scene rendered once and pushed through the pipeline once."""

    def __init__(self, seed=7):
        self.scene = default_scene(seed=seed)
        self.rendered = render_events(self.scene)
        self.streams = {c: ls.stream for c, ls in self.rendered.items()}
        self.rig = self.scene.rig
        self.result = run_pipeline(self.rig, self.streams)


@pytest.fixture(scope="session")
def scene_run():
    return SceneRun()


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_ACCEPTANCE.items()):
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{tag}] {name}")
