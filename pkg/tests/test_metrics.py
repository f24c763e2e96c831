import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featslam.errors import DegenerateConfiguration, InsufficientPoses, NoAssociations, ParseError
from featslam.geometry import Pose, se3_exp
from featslam.metrics import (
    Trajectory,
    associate,
    ate,
    ate_errors,
    evaluate,
    format_trajectory,
    parse_trajectory,
    read_trajectory,
    rpe_translation,
    umeyama_align,
    write_trajectory,
)


def seeded_trajectory(seed, n=100):
    rng = np.random.default_rng(seed)
    poses, T = [], Pose.identity()
    for _ in range(n):
        T = T @ se3_exp(np.concatenate([rng.normal(scale=0.05, size=3), rng.normal(scale=0.02, size=3)]))
        poses.append(T)
    return Trajectory([(0.1 * i, p) for i, p in enumerate(poses)])


def translated(traj, offsets):
    return Trajectory([(t, Pose(p.rotation, p.translation + o)) for (t, p), o in zip(traj, offsets)])


def test_associate_identity_and_offset():
    gt = seeded_trajectory(0, 10)
    assert associate(gt, gt) == [(i, i) for i in range(10)]
    shifted = Trajectory([(t + 0.01, p) for t, p in gt])
    assert associate(shifted, gt, max_dt=0.02) == [(i, i) for i in range(10)]


def test_associate_disjoint():
    a = seeded_trajectory(0, 5)
    b = Trajectory([(t + 100, p) for t, p in a])
    with pytest.raises(NoAssociations):
        associate(a, b)


def test_umeyama_identity_and_known_transform():
    rng = np.random.default_rng(1)
    G = rng.normal(size=(20, 3))
    R, t = umeyama_align(G, G)
    assert np.allclose(R, np.eye(3), atol=1e-12) and np.allclose(t, 0, atol=1e-12)
    Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    est = G @ Rz.T + [1, 2, 3]
    R, t = umeyama_align(est, G)
    assert np.allclose(R, Rz.T, atol=1e-12)
    assert np.allclose(est @ R.T + t, G, atol=1e-12)
    assert abs(np.linalg.det(R) - 1) < 1e-12


def test_umeyama_degenerate():
    with pytest.raises(DegenerateConfiguration):
        umeyama_align(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateConfiguration):
        umeyama_align(line, line)


def test_ate_zero_and_offset():
    gt = seeded_trajectory(2, 30)
    assert ate(gt, gt, align=False) == (0.0, 0.0)
    assert max(ate(gt, gt)) < 1e-12
    off = translated(gt, [np.array([0.3, -0.1, 2.0])] * 30)
    rmse, sd = ate(off, gt, align=True)
    assert rmse < 1e-12 and sd < 1e-12


def test_ate_two_pose_hand_example():
    gt = Trajectory([(0.0, Pose.identity()), (1.0, Pose(np.eye(3), [1.0, 0, 0]))])
    est = Trajectory([(0.0, Pose.identity()), (1.0, Pose(np.eye(3), [1.2, 0, 0]))])
    rmse, sd = ate(est, gt, align=False)
    assert rmse == pytest.approx(math.sqrt(0.02), abs=1e-12)
    assert rmse == pytest.approx(0.1414, abs=1e-4)
    assert sd == pytest.approx(0.1, abs=1e-12)


def test_rpe_examples():
    gt = Trajectory([(float(i), Pose(np.eye(3), [0.5 * i, 0, 0])) for i in range(10)])
    assert rpe_translation(gt, gt) == (0.0, 0.0)
    G = se3_exp([1, -2, 0.5, 0.3, -0.2, 0.9])
    rmse, _ = rpe_translation(gt.transformed(G), gt)
    assert rmse < 1e-12
    # one corrupted step: every pose from index 5 on shifts by +0.1 in x
    est = translated(gt, [np.array([0.1 if i >= 5 else 0.0, 0, 0]) for i in range(10)])
    rmse, _ = rpe_translation(est, gt, delta=1)
    assert rmse == pytest.approx(math.sqrt(0.01 / 9), abs=1e-12)
    assert rmse == pytest.approx(0.0333, abs=1e-4)


def test_rpe_insufficient():
    gt = seeded_trajectory(3, 3)
    with pytest.raises(InsufficientPoses):
        rpe_translation(gt, gt, delta=3)


def test_parse_identity_line():
    t = parse_trajectory("0.0 0 0 0 0 0 0 1\n")
    (ts, p), = t.entries
    assert ts == 0 and np.allclose(p.matrix(), np.eye(4))


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_trajectory("# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n")
    assert exc.value.line_number == 3
    with pytest.raises(ParseError):
        parse_trajectory("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n")
    with pytest.raises(ParseError):
        parse_trajectory("0 0 0 0 0 0 0 x\n")


def test_round_trip_file(tmp_path):
    traj = seeded_trajectory(4, 100)
    path = tmp_path / "t.txt"
    write_trajectory(traj, path)
    back = read_trajectory(path)
    assert len(back) == len(traj)
    for (ta, pa), (tb, pb) in zip(traj, back):
        assert abs(ta - tb) <= 1e-9
        assert np.max(np.abs(pa.matrix() - pb.matrix())) <= 1e-9
    assert b"\r" not in path.read_bytes()


def test_report_consistency():
    gt = seeded_trajectory(5, 50)
    rng = np.random.default_rng(5)
    est = translated(gt, rng.normal(scale=0.05, size=(50, 3)))
    rep = evaluate(est, gt)
    err = ate_errors(est, gt)
    assert rep.ate_rmse**2 == pytest.approx(np.mean(err) ** 2 + rep.ate_sd**2, abs=1e-9)
    assert rep.n_pairs == 50
    assert rep.to_csv().splitlines()[0] == "ate_rmse,ate_sd,rpe_t_rmse,rpe_t_sd,n_pairs"


# --- properties ------------------------------------------------------------

_vec6 = st.lists(st.floats(-2.0, 2.0), min_size=6, max_size=6)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), g=_vec6)
def test_ate_rigid_invariance(seed, g):
    gt = seeded_trajectory(seed, 30)
    rng = np.random.default_rng(seed)
    est = translated(gt, rng.normal(scale=0.05, size=(30, 3)))
    a = ate_errors(est, gt, align=True)
    b = ate_errors(est.transformed(se3_exp(g)), gt, align=True)
    assert np.max(np.abs(a - b)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), g=_vec6)
def test_rpe_global_invariance(seed, g):
    gt = seeded_trajectory(seed, 20)
    rng = np.random.default_rng(seed + 1)
    est = translated(gt, rng.normal(scale=0.05, size=(20, 3)))
    a = rpe_translation(est, gt)
    b = rpe_translation(est.transformed(se3_exp(g)), gt)
    assert abs(a[0] - b[0]) < 1e-9 and abs(a[1] - b[1]) < 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_umeyama_never_worse_than_identity(seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(15, 3))
    E = G @ se3_exp(rng.normal(size=6)).rotation.T + rng.normal(scale=0.3, size=(15, 3))
    R, t = umeyama_align(E, G)
    aligned = np.sum((G - (E @ R.T + t)) ** 2)
    assert aligned <= np.sum((G - E) ** 2) + 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rmse_sd_relation(seed):
    gt = seeded_trajectory(seed, 25)
    rng = np.random.default_rng(seed)
    est = translated(gt, rng.normal(scale=0.1, size=(25, 3)))
    err = ate_errors(est, gt)
    rmse, sd = ate(est, gt)
    assert abs(rmse**2 - (np.mean(err) ** 2 + sd**2)) < 1e-9
