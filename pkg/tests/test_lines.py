import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featslam import instrument
from featslam.errors import DegenerateSegment, NonPositiveDepth, PartiallyBehindCamera
from featslam.geometry import Pose
from featslam.lines import (
    Line2D,
    Line3D,
    LineDescriptor,
    _match_from_distances,
    descriptor_distance,
    make_descriptor,
    match_lines,
    project_line,
    sample_line,
    search_projection_match,
)

from conftest import random_pose


def test_sample_line_examples():
    assert np.allclose(sample_line((0, 0), (4, 8)).samples, [(0, 0), (1, 2), (2, 4), (3, 6), (4, 8)])
    assert np.allclose(sample_line((2, 0), (0, 0)).samples, [(2, 0), (1.5, 0), (1, 0), (0.5, 0), (0, 0)])
    with pytest.raises(DegenerateSegment):
        sample_line((10, 10), (10, 10))


def test_line3d_samples_and_degenerate():
    L = Line3D([0, 0, 0], [4, 0, 0])
    assert np.allclose(L.samples[:, 0], [0, 1, 2, 3, 4])
    assert np.allclose(L.mid, [2, 0, 0])
    with pytest.raises(DegenerateSegment):
        Line3D([1, 1, 1], [1, 1, 1])


def test_line3d_affine_identities_after_transform():
    rng = np.random.default_rng(0)
    for _ in range(20):
        L = Line3D(rng.normal(size=3), rng.normal(size=3))
        T = random_pose(rng)
        M = L.transformed(T)
        assert np.allclose(M.mid, T.apply(L.mid), atol=1e-12)
        assert np.allclose(M.quarter1, 0.75 * M.start + 0.25 * M.end, atol=1e-12)
        assert np.allclose(M.quarter2, T.apply(L.quarter2), atol=1e-12)


def test_descriptor_examples():
    d = make_descriptor(sample_line((0, 0), (3, 4)), 1.0)
    assert d.length == pytest.approx(5)
    assert d.angle == pytest.approx(math.atan2(4, 3))
    assert d.angle == pytest.approx(0.9273, abs=1e-4)
    assert make_descriptor(sample_line((0, 5), (9, 5)), 1).angle == 0
    fwd = make_descriptor(sample_line((1, 2), (7, -3)), 1)
    rev = make_descriptor(sample_line((7, -3), (1, 2)), 1)
    assert fwd.angle == pytest.approx(rev.angle, abs=1e-12)
    assert 0 <= fwd.angle < math.pi


def test_descriptor_distance_examples():
    a = LineDescriptor(10, 0.3, 1.0)
    b = LineDescriptor(20, 0.3, 1.0)
    assert descriptor_distance(a, a) == 0
    assert descriptor_distance(a, b) == pytest.approx(0.5)
    # angles near 0 and near pi are close
    c = LineDescriptor(10, math.pi - 0.01, 1.0)
    d = LineDescriptor(10, 0.01, 1.0)
    assert descriptor_distance(c, d) == pytest.approx(0.02 / (math.pi / 2))


@settings(max_examples=200, deadline=None)
@given(
    a=st.tuples(st.floats(1, 500), st.floats(0, 3.14159), st.floats(0, 5)),
    b=st.tuples(st.floats(1, 500), st.floats(0, 3.14159), st.floats(0, 5)),
)
def test_descriptor_distance_premetric(a, b):
    da, db = LineDescriptor(*a), LineDescriptor(*b)
    assert descriptor_distance(da, da) == 0
    assert descriptor_distance(da, db) == descriptor_distance(db, da)
    assert descriptor_distance(da, db) >= 0


def test_match_empty_and_exact_duplicate():
    q = [LineDescriptor(50, 0.2, 1.0), LineDescriptor(200, 1.5, 2.5)]
    assert match_lines(q, []) == []
    cands = [LineDescriptor(400, 2.8, 0.0), LineDescriptor(50, 0.2, 1.0)]
    m = match_lines(q[:1], cands)
    assert len(m) == 1 and m[0].index_j == 1 and m[0].distance == 0


def test_match_ratio_rejection():
    D = np.array([[0.10, 0.12]])
    assert _match_from_distances(D, 0.25, 0.7) == []
    D = np.array([[0.05, 0.5]])
    m = _match_from_distances(D, 0.25, 0.7)
    assert [(x.index_i, x.index_j) for x in m] == [(0, 0)]


def test_match_max_dist():
    assert _match_from_distances(np.array([[0.3]]), 0.25, 0.7) == []


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 12), m=st.integers(0, 12))
def test_match_one_to_one(seed, n, m):
    rng = np.random.default_rng(seed)

    def rand(k):
        return [LineDescriptor(rng.uniform(10, 300), rng.uniform(0, math.pi), rng.uniform(0.5, 3)) for _ in range(k)]

    a, b = rand(n), rand(m)
    b += [LineDescriptor(x.length * 1.01, x.angle, x.response) for x in a[: n // 2]]
    out = match_lines(a, b)
    assert len({x.index_i for x in out}) == len(out)
    assert len({x.index_j for x in out}) == len(out)


def test_project_line_example(K500):
    l = project_line(K500, Pose.identity(), Line3D([-1, 0, 2], [1, 0, 2]))
    assert np.allclose(l.start, [70, 240]) and np.allclose(l.end, [570, 240])


def test_project_line_behind(K500):
    with pytest.raises(PartiallyBehindCamera):
        project_line(K500, Pose.identity(), Line3D([0, 0, 2], [0, 0, -1]))
    with pytest.raises(NonPositiveDepth):
        project_line(K500, Pose.identity(), Line3D([0, 0, -2], [1, 0, -1]))


def test_projection_collinear(K500):
    rng = np.random.default_rng(5)
    for _ in range(100):
        L = Line3D(rng.uniform([-1, -1, 1], [1, 1, 5]), rng.uniform([-1, -1, 1], [1, 1, 5]))
        s = project_line(K500, Pose.identity(), L).samples
        d = s[4] - s[0]
        n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        assert np.max(np.abs((s - s[0]) @ n)) < 1e-6


def _frame_line(K, T, L, response=1.0):
    l2 = project_line(K, T, L)
    return l2, make_descriptor(l2, response)


def test_search_projection_match_identical(K500):
    L = Line3D([-0.5, 0.1, 2], [0.5, 0.2, 2.5])
    fl = _frame_line(K500, Pose.identity(), L)
    m = search_projection_match([(L, fl[1])], [fl], K500, Pose.identity(), window=20)
    assert len(m) == 1 and m[0].distance == pytest.approx(0, abs=1e-12)


def test_search_projection_match_outside_window(K500):
    L = Line3D([-0.5, 0.1, 2], [0.5, 0.1, 2])
    l2, d = _frame_line(K500, Pose.identity(), L)
    shifted = Line2D(l2.samples + [0, 50])
    m = search_projection_match([(L, d)], [(shifted, d)], K500, Pose.identity(), window=20)
    assert m == []


def test_search_projection_match_ratio(K500):
    L = Line3D([-0.5, 0.0, 2], [0.5, 0.0, 2])  # projects to a 250 px horizontal segment
    l2, d = _frame_line(K500, Pose.identity(), L)
    near = Line2D(l2.samples + [0, 3])
    far = Line2D(l2.samples + [0, -3])
    # descriptor distances 0.05 and 0.5 via the length term
    cand = [(near, LineDescriptor(d.length * 0.95, d.angle, d.response)),
            (far, LineDescriptor(d.length * 0.5, d.angle, d.response))]
    m = search_projection_match([(L, d)], cand, K500, Pose.identity(), window=20)
    assert [(x.index_i, x.index_j) for x in m] == [(0, 0)]
    assert m[0].distance == pytest.approx(0.05)


def test_line_ops_counter_bumps():
    sample_line((0, 0), (10, 0))
    assert instrument.get(instrument.LINE_OPS) == 1
