import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featslam.dynamic import (
    DynamicMask,
    align_line_direction,
    epipolar_filter_lines,
    epipolar_filter_points,
    mask_filter_lines,
    mask_filter_points,
    remove_dynamic_lines,
    remove_dynamic_points,
    run_removal,
)
from featslam.geometry import Pose, epipolar_line, fundamental_from_poses, point_line_distance, project
from featslam.lines import Line2D, sample_line

# camera i at the origin, camera j moved +0.05 along x: epipolar lines are horizontal rows
F_X = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)


def test_mask_empty_keeps_all():
    out = mask_filter_points([(1, 1), (5, 5)], DynamicMask())
    assert out.retained.tolist() == [0, 1]


def test_mask_inside_and_edge_inclusive():
    m = DynamicMask(((10, 10, 20, 20),))
    out = mask_filter_points([(15, 15), (10, 17), (20, 20), (21, 15)], m)
    assert out.removed_by_mask.tolist() == [0, 1, 2]
    assert out.retained.tolist() == [3]


def _line_with_inside(k):
    """Horizontal line whose first ``k`` samples fall inside the box (0,0)-(10,10)."""
    # samples at u = 0, 4, 8, 12, 16 along v = 5
    line = sample_line((0, 5), (16, 5))
    box_u1 = [-1, 0, 4, 8, 12, 16][k]
    return line, DynamicMask(((0 if k else -10, 0, box_u1, 10),))


@pytest.mark.parametrize("k,removed", [(0, False), (2, False), (3, True), (5, True)])
def test_line_mask_votes(k, removed):
    line, mask = _line_with_inside(k)
    out = mask_filter_lines([line], mask)
    assert (len(out.removed_by_mask) == 1) is removed


def test_point_epipolar_static_and_mover():
    # x-translation: static match keeps its row, a mover shifted 1.5 px vertically violates
    prev = [(100, 200), (300, 100)]
    cur = [(140, 200), (350, 101.5)]
    out = epipolar_filter_points(np.stack([prev, cur], axis=1), F_X)
    assert out.retained.tolist() == [0]
    assert out.removed_by_epipolar.tolist() == [1]


def test_point_epipolar_threshold_is_strict():
    out = epipolar_filter_points([[(100, 200), (150, 201.0)]], F_X, d_th=1.0)
    assert out.retained.tolist() == [0]
    out = epipolar_filter_points([[(100, 200), (150, 201.0 + 1e-9)]], F_X, d_th=1.0)
    assert out.removed_by_epipolar.tolist() == [0]


def _line_votes_pair(n_bad):
    """Previous/current lines where exactly ``n_bad`` samples leave their row by 2 px."""
    prev = sample_line((100, 200), (300, 260))
    cur = prev.samples.copy()
    cur[:, 0] += 10
    cur[:n_bad, 1] += 2.0
    return prev, Line2D(cur)


@pytest.mark.parametrize("n_bad,removed", [(0, False), (2, False), (3, True), (5, True)])
def test_line_epipolar_votes(n_bad, removed):
    out = epipolar_filter_lines([_line_votes_pair(n_bad)], F_X)
    assert (len(out.removed_by_epipolar) == 1) is removed


def test_stage_order_mask_wins():
    mask = DynamicMask(((0, 0, 200, 300),))
    out = remove_dynamic_points([(150, 205)], [(100, 200)], mask, F_X)
    assert out.removed_by_mask.tolist() == [0] and len(out.removed_by_epipolar) == 0


def test_unmatched_skip_stage_two():
    out = remove_dynamic_points([(150, 250)], [(np.nan, np.nan)], DynamicMask(), F_X)
    assert out.retained.tolist() == [0]


def test_all_static_frame_retained():
    rng = np.random.default_rng(0)
    K_pts = rng.uniform([-1, -1, 2], [1, 1, 5], size=(40, 3))
    from featslam.geometry import CameraIntrinsics

    K = CameraIntrinsics(500, 500, 320, 240, 640, 480)
    Ti, Tj = Pose.identity(), Pose(np.eye(3), [-0.05, 0.01, 0.0])
    F = fundamental_from_poses(K, Ti, Tj)
    xi = np.array([project(K, Ti, P) for P in K_pts])
    xj = np.array([project(K, Tj, P) for P in K_pts])
    out = remove_dynamic_points(xj, xi, DynamicMask(), F)
    assert len(out.retained) == 40


def test_simulated_mover_violates(K500):
    # object 2 units away moving 0.1 per frame, camera baseline 0.05 along x
    Ti, Tj = Pose.identity(), Pose(np.eye(3), [-0.05, 0, 0])
    F = fundamental_from_poses(K500, Ti, Tj)
    P0 = np.array([0.2, 0.3, 2.0])
    P1 = P0 + [0.0, 0.1, 0.0]
    xi, xj = project(K500, Ti, P0), project(K500, Tj, P1)
    d = point_line_distance(epipolar_line(F, xi), xj)
    assert d == pytest.approx(500 * 0.1 / 2.0)  # pure vertical shift of 25 px
    assert epipolar_filter_points([[xi, xj]], F).removed_by_epipolar.tolist() == [0]


def test_remove_lines_with_prev_none():
    line = sample_line((100, 200), (300, 200))
    out = remove_dynamic_lines([line], [None], DynamicMask(), F_X)
    assert out.retained.tolist() == [0]


def test_run_removal_combined():
    res = run_removal([(10, 10)], [(np.nan, np.nan)], DynamicMask(), None,
                      lines=[sample_line((0, 0), (30, 0))])
    assert res.points.retained.tolist() == [0] and res.lines.retained.tolist() == [0]


def test_align_line_direction():
    ref = sample_line((0, 0), (10, 0))
    flipped = sample_line((10, 1), (0, 1))
    assert np.allclose(align_line_direction(ref, flipped).start, [0, 1])


def _oracle(points, prev, boxes, F, d_th):
    keep = []
    for k, (p, q) in enumerate(zip(points, prev)):
        if any(b[0] <= p[0] <= b[2] and b[1] <= p[1] <= b[3] for b in boxes):
            continue
        if np.all(np.isfinite(q)):
            l = F @ np.array([q[0], q[1], 1.0])
            if abs(l @ [p[0], p[1], 1.0]) / np.hypot(l[0], l[1]) > d_th:
                continue
        keep.append(k)
    return keep


def test_mixed_frame_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = 60
        prev = rng.uniform(0, [640, 480], size=(n, 2))
        cur = prev + [rng.uniform(-5, 5), 0] + rng.normal(scale=1.0, size=(n, 2))
        prev[rng.random(n) < 0.2] = np.nan
        u0, u1 = np.sort(rng.uniform(0, 640, 2))
        v0, v1 = np.sort(rng.uniform(0, 480, 2))
        mask = DynamicMask(((u0, v0, u1, v1),))
        out = remove_dynamic_points(cur, prev, mask, F_X, 1.0)
        assert out.retained.tolist() == _oracle(cur, prev, mask.regions, F_X, 1.0)
        assert out.is_partition_of(n)


# --- properties ------------------------------------------------------------

_frame = st.integers(0, 100_000)


@settings(max_examples=100, deadline=None)
@given(seed=_frame, grow=st.floats(0, 50))
def test_mask_growth_never_grows_retained(seed, grow):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, [640, 480], size=(50, 2))
    u0, v0 = rng.uniform(0, 300, 2)
    box = (u0, v0, u0 + 100, v0 + 80)
    big = (box[0] - grow, box[1] - grow, box[2] + grow, box[3] + grow)
    a = set(mask_filter_points(pts, DynamicMask((box,))).retained.tolist())
    b = set(mask_filter_points(pts, DynamicMask((big,))).retained.tolist())
    assert b <= a


@settings(max_examples=100, deadline=None)
@given(seed=_frame, d1=st.floats(0.1, 5), d2=st.floats(0.1, 5))
def test_threshold_monotone(seed, d1, d2):
    lo, hi = sorted((d1, d2))
    rng = np.random.default_rng(seed)
    prev = rng.uniform(0, [640, 480], size=(40, 2))
    cur = prev + rng.normal(scale=2.0, size=(40, 2))
    a = set(remove_dynamic_points(cur, prev, DynamicMask(), F_X, lo).retained.tolist())
    b = set(remove_dynamic_points(cur, prev, DynamicMask(), F_X, hi).retained.tolist())
    assert a <= b


@settings(max_examples=100, deadline=None)
@given(seed=_frame)
def test_partition_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 40))
    prev = rng.uniform(0, [640, 480], size=(n, 2))
    cur = prev + rng.normal(scale=2.0, size=(n, 2))
    mask = DynamicMask(((100, 100, 300, 300),))
    out = remove_dynamic_points(cur, prev, mask, F_X)
    assert out.is_partition_of(n)
    lines = [sample_line(p, p + [40, 5]) for p in prev]
    plines = [sample_line(p, p + [40, 5]) for p in cur]
    lo = remove_dynamic_lines(lines, plines, mask, F_X)
    assert lo.is_partition_of(n)
