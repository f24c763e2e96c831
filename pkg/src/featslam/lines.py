"""Line segments: five-point sampling, descriptors and matching.

Every public operation bumps the ``line_ops`` counter in
:mod:`featslam.instrument` by the number of line elements it touched, which
is how the pipeline proves that line work only happens in PointLine frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import instrument
from .errors import DegenerateSegment, NonPositiveDepth, PartiallyBehindCamera
from .geometry import DEPTH_EPS, CameraIntrinsics, Pose

SAMPLE_PARAMS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])

DEFAULT_MAX_DIST = 0.25
DEFAULT_RATIO = 0.7


def _frozen(a, shape):
    a = np.array(a, dtype=float).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Line3D:
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", _frozen(self.start, 3))
        object.__setattr__(self, "end", _frozen(self.end, 3))
        if not np.linalg.norm(self.end - self.start) > 0:
            raise DegenerateSegment("3D line has coincident endpoints")

    @property
    def samples(self):
        """(5, 3): start, quarter 1, midpoint, quarter 2, end."""
        return (1 - SAMPLE_PARAMS)[:, None] * self.start + SAMPLE_PARAMS[:, None] * self.end

    @property
    def quarter1(self):
        return 0.75 * self.start + 0.25 * self.end

    @property
    def mid(self):
        return 0.5 * (self.start + self.end)

    @property
    def quarter2(self):
        return 0.25 * self.start + 0.75 * self.end

    def transformed(self, T: Pose) -> "Line3D":
        return Line3D(T.apply(self.start), T.apply(self.end))

    def reversed(self) -> "Line3D":
        return Line3D(self.end, self.start)


@dataclass(frozen=True, eq=False)
class Line2D:
    """Image segment carried as its five sample points, shape (5, 2).

    Built by :func:`sample_line` the interior points are affine
    interpolations of the endpoints; built by :func:`project_line` they are
    the perspective images of the 3D samples.
    """

    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples, (5, 2)))

    @property
    def start(self):
        return self.samples[0]

    @property
    def end(self):
        return self.samples[4]

    @property
    def mid(self):
        return self.samples[2]

    @property
    def length(self):
        return float(np.linalg.norm(self.end - self.start))

    def reversed(self) -> "Line2D":
        return Line2D(self.samples[::-1])

    def canonical(self) -> "Line2D":
        """Endpoint order made lexicographic on (u, v)."""
        if tuple(self.end) < tuple(self.start):
            return self.reversed()
        return self


@dataclass(frozen=True)
class LineDescriptor:
    length: float
    angle: float
    response: float


@dataclass(frozen=True)
class LineMatch:
    index_i: int
    index_j: int
    distance: float


def sample_line(s, e) -> Line2D:
    s = np.asarray(s, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.linalg.norm(e - s) < 1.0:
        raise DegenerateSegment(f"segment {s}-{e} is shorter than 1 px")
    instrument.bump(instrument.LINE_OPS)
    return Line2D((1 - SAMPLE_PARAMS)[:, None] * s + SAMPLE_PARAMS[:, None] * e)


def fold_angle(a):
    """Wrap an angle into [0, pi)."""
    a = math.fmod(a, math.pi)
    if a < 0:
        a += math.pi
    if a >= math.pi:
        a = 0.0
    return a


def make_descriptor(line: Line2D, response: float) -> LineDescriptor:
    d = line.end - line.start
    instrument.bump(instrument.LINE_OPS)
    return LineDescriptor(
        length=float(np.hypot(d[0], d[1])),
        angle=fold_angle(math.atan2(d[1], d[0])),
        response=float(response),
    )


def angle_difference(a, b):
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def descriptor_distance(d_i: LineDescriptor, d_j: LineDescriptor, weights=(1.0, 1.0, 1.0)) -> float:
    w_len, w_ang, w_resp = weights
    len_term = abs(d_i.length - d_j.length) / max(d_i.length, d_j.length)
    ang_term = angle_difference(d_i.angle, d_j.angle) / (math.pi / 2)
    resp_term = abs(d_i.response - d_j.response) / max(d_i.response, d_j.response, 1.0)
    return w_len * len_term + w_ang * ang_term + w_resp * resp_term


def _distance_matrix(set_i, set_j, weights):
    D = np.empty((len(set_i), len(set_j)))
    for a, di in enumerate(set_i):
        for b, dj in enumerate(set_j):
            D[a, b] = descriptor_distance(di, dj, weights)
    return D


def _match_from_distances(D, max_dist, ratio):
    """Nearest-neighbour, ratio test and mutual-best filter on a distance
    matrix; ``inf`` entries are non-candidates."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if not max_dist > 0:
        raise ValueError("max_dist must be positive")
    matches = []
    if D.size == 0:
        return matches
    col_best = np.argmin(D, axis=0)
    for i in range(D.shape[0]):
        row = D[i]
        finite = np.isfinite(row)
        n_cand = int(finite.sum())
        if n_cand == 0:
            continue
        order = np.argsort(row, kind="stable")
        j1 = int(order[0])
        best = row[j1]
        if not best < max_dist:
            continue
        if n_cand > 1 and not best < ratio * row[order[1]]:
            continue
        if col_best[j1] != i:
            continue
        matches.append(LineMatch(i, j1, float(best)))
    return matches


def match_lines(set_i, set_j, max_dist=DEFAULT_MAX_DIST, ratio=DEFAULT_RATIO, weights=(1.0, 1.0, 1.0)):
    """One-to-one descriptor matches between two line sets."""
    instrument.bump(instrument.LINE_OPS, len(set_i) * len(set_j))
    D = _distance_matrix(set_i, set_j, weights)
    return _match_from_distances(D, max_dist, ratio)


def project_line(K: CameraIntrinsics, T_cw: Pose, L: Line3D) -> Line2D:
    X = T_cw.apply(L.samples)
    ok = X[:, 2] > DEPTH_EPS
    instrument.bump(instrument.LINE_OPS)
    if not ok.any():
        raise NonPositiveDepth("line is entirely behind the camera")
    if not ok.all():
        raise PartiallyBehindCamera(f"{int((~ok).sum())} of 5 samples behind the camera")
    uv = np.column_stack([K.fx * X[:, 0] / X[:, 2] + K.cx, K.fy * X[:, 1] / X[:, 2] + K.cy])
    return Line2D(uv)


def search_projection_match(
    map_lines,
    frame_lines,
    K: CameraIntrinsics,
    T_cw: Pose,
    window: float,
    max_dist=DEFAULT_MAX_DIST,
    ratio=DEFAULT_RATIO,
    weights=(1.0, 1.0, 1.0),
):
    """Associate 3D map lines with frame lines near their projections.

    ``map_lines`` holds ``(Line3D, LineDescriptor)`` pairs and ``frame_lines``
    ``(Line2D, LineDescriptor)`` pairs. A map line is described by the length
    and angle of its current projection plus its stored edge response.
    Returns :class:`LineMatch` with ``index_i`` into ``map_lines`` and
    ``index_j`` into ``frame_lines``.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    D = np.full((len(map_lines), len(frame_lines)), np.inf)
    if not len(map_lines) or not len(frame_lines):
        return []
    frame_mids = np.array([fl.mid for fl, _ in frame_lines])
    for a, (L, desc) in enumerate(map_lines):
        try:
            proj = project_line(K, T_cw, L)
        except NonPositiveDepth:
            continue
        if proj.length < 1.0:
            continue
        near = np.flatnonzero(np.linalg.norm(frame_mids - proj.mid, axis=1) <= window)
        if len(near) == 0:
            continue
        pd = make_descriptor(proj, desc.response)
        for b in near:
            D[a, b] = descriptor_distance(pd, frame_lines[b][1], weights)
        instrument.bump(instrument.LINE_OPS, len(near))
    return _match_from_distances(D, max_dist, ratio)
