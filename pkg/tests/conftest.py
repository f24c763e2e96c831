import numpy as np
import pytest

from featslam import instrument, kernels
from featslam.geometry import CameraIntrinsics, Pose, se3_exp

# criterion lines reported by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []
# global-refinement line residuals summed over every test in the session
SESSION = {"global_line_residuals": 0, "tests": 0}


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the numba kernels once so timing checks measure steady state
    cam = np.array([500.0, 500.0, 320.0, 240.0])
    R = np.ascontiguousarray(np.broadcast_to(np.eye(3), (2, 3, 3)))
    t = np.zeros((2, 3))
    P = np.array([[0.0, 0.0, 2.0], [0.1, 0.2, 3.0]])
    uv = np.array([[320.0, 240.0], [330.0, 250.0]])
    kernels.point_jacobians(cam, R, t, P, uv)
    kernels.epipolar_distances(np.eye(3), uv.copy(), uv.copy())
    kernels.grid_stats(uv.copy(), 640.0, 480.0, 3, 3)
    from featslam.optim import WindowProblem, bundle_adjust

    prob = WindowProblem(
        poses={0: Pose.identity(), 1: se3_exp([0.1, 0, 0, 0, 0, 0])},
        points={0: P[0], 1: P[1]},
        point_obs=[(0, 0, 320.0, 240.0), (1, 0, 345.0, 240.0), (0, 1, 336.7, 273.3), (1, 1, 353.3, 273.3)],
        lines={0: (np.array([0.0, 0, 2]), np.array([0.3, 0, 2]))},
        line_obs=[(0, 0, 320.0, 240.0, 395.0, 240.0), (1, 0, 345.0, 240.0, 420.0, 240.0)],
        fixed={0},
    )
    bundle_adjust(cam, prob, max_iters=2)
    instrument.reset()
    yield


@pytest.fixture(autouse=True)
def _clean_counters():
    instrument.reset()
    yield
    n = instrument.get(instrument.GLOBAL_LINE_RESIDUALS)
    SESSION["global_line_residuals"] += n
    SESSION["tests"] += 1
    assert n == 0, f"global refinement evaluated {n} line residuals"


@pytest.fixture
def K500():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


def random_pose(rng, rot=0.3, trans=0.5):
    return se3_exp(np.concatenate([rng.uniform(-trans, trans, 3), rng.uniform(-rot, rot, 3)]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
