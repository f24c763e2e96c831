"""Frame-by-frame tracking and mapping over simulated RGB-D frames.

Per frame, in order: dynamic removal on points, the sufficiency score and
mode decision, line extraction / filtering / association when the mode asks
for lines, robust pose estimation, keyframe insertion by stride, and a local
BA on keyframes. After the last frame a points-only global refinement runs
over every keyframe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import instrument
from .awareness import AwarenessConfig, GridStats, SceneMode, decide_mode, feature_quality, grid_partition
from .dynamic import FilterOutcome, align_line_direction, remove_dynamic_lines, remove_dynamic_points
from .errors import DegenerateBaseline, InsufficientObservations, InvalidConfig
from .geometry import CameraIntrinsics, Pose, backproject_points, fundamental_from_poses, project_points
from .lines import Line3D, LineDescriptor, make_descriptor, match_lines, sample_line, search_projection_match
from .metrics import Trajectory, evaluate
from .optim import (
    LINE_HUBER_DELTA,
    POINT_HUBER_DELTA,
    LineObservation,
    PointObservation,
    RobustKernel,
    WindowProblem,
    estimate_pose,
    global_refine,
    local_bundle_adjust,
)

LINE_POLICIES = ("auto", "always", "never")


@dataclass(frozen=True)
class PipelineConfig:
    awareness: AwarenessConfig
    d_th: float = 1.0
    line_max_dist: float = 0.25
    line_ratio: float = 0.7
    line_window: float = 20.0
    point_huber: float = POINT_HUBER_DELTA
    line_huber: float = LINE_HUBER_DELTA
    line_weight: float = 1.0
    window_size: int = 5
    keyframe_stride: int = 5
    max_iters: int = 20
    tol: float = 1e-8
    ba_iters: int = 10
    removal: bool = True
    line_policy: str = "auto"
    init_from_gt: bool = True
    oracle_relocalize: bool = False
    run_global_refine: bool = True
    cull_strikes: int = 2
    min_parallax_deg: float = 1.0
    min_keyframe_rows: int = 20

    def __post_init__(self):
        if self.window_size < 2:
            raise InvalidConfig("window_size must be >= 2", key="window_size")
        if self.keyframe_stride < 1:
            raise InvalidConfig("keyframe_stride must be >= 1", key="keyframe_stride")
        if not self.d_th > 0:
            raise InvalidConfig("d_th must be positive", key="d_th")
        if self.line_policy not in LINE_POLICIES:
            raise InvalidConfig(f"line_policy must be one of {LINE_POLICIES}", key="line_policy")
        if not (0 < self.line_ratio <= 1):
            raise InvalidConfig("line_ratio must be in (0, 1]", key="line_ratio")
        for key in ("line_max_dist", "line_window", "point_huber", "line_huber"):
            if not getattr(self, key) > 0:
                raise InvalidConfig(f"{key} must be positive", key=key)

    @property
    def point_kernel(self):
        return RobustKernel(self.point_huber)

    @property
    def line_kernel(self):
        return RobustKernel(self.line_huber)


@dataclass(eq=False)
class MapLine:
    start: np.ndarray
    end: np.ndarray
    response: float
    obs: list = field(default_factory=list)  # (kf, su, sv, eu, ev)
    source: int = -1  # simulator line id, for diagnostics only

    def as_line3d(self):
        return Line3D(self.start, self.end)


@dataclass(eq=False)
class WorldMap:
    points: dict = field(default_factory=dict)  # landmark id -> (3,)
    point_obs: dict = field(default_factory=dict)  # landmark id -> [(kf, u, v)]
    lines: dict = field(default_factory=dict)  # map line id -> MapLine
    keyframes: dict = field(default_factory=dict)  # frame index -> T_cw
    strikes: dict = field(default_factory=dict)  # landmark id -> tracking outlier count
    next_line_id: int = 0

    def drop_point(self, pid):
        self.points.pop(pid, None)
        self.point_obs.pop(pid, None)
        self.strikes.pop(pid, None)

    def window_problem(self, kf_ids, fixed, with_lines, min_parallax=0.0):
        kfs = set(kf_ids)
        pobs = [(k, pid, u, v) for pid, obs in self.point_obs.items() for (k, u, v) in obs if k in kfs]
        pids = {o[1] for o in pobs}
        lobs, lines = [], {}
        if with_lines:
            for lid, ml in self.lines.items():
                rows = [(k, lid, *uv) for (k, *uv) in ml.obs if k in kfs]
                if rows:
                    lobs.extend(rows)
                    lines[lid] = (ml.start, ml.end)
        return WindowProblem(
            poses={k: self.keyframes[k] for k in kf_ids},
            points={p: self.points[p] for p in pids},
            point_obs=pobs,
            lines=lines,
            line_obs=lobs,
            fixed=set(fixed),
            fixed_points=self._low_parallax(pobs, lambda p: self.points[p], min_parallax),
            fixed_lines=self._low_parallax(
                lobs, lambda l: 0.5 * (self.lines[l].start + self.lines[l].end), min_parallax
            ),
        )

    def _low_parallax(self, obs, position, min_parallax):
        """Landmarks whose viewing rays from the observing keyframes span
        less than ``min_parallax`` radians; their depth is unobservable."""
        seen = {}
        for o in obs:
            seen.setdefault(o[1], set()).add(o[0])
        out = set()
        for lm, kfs in seen.items():
            X = position(lm)
            rays = np.array([X - self.keyframes[k].center() for k in sorted(kfs)])
            rays /= np.linalg.norm(rays, axis=1, keepdims=True)
            cos_min = np.min(rays @ rays.T)
            if np.arccos(np.clip(cos_min, -1.0, 1.0)) < min_parallax:
                out.add(lm)
        return out

    def apply(self, result):
        self.keyframes.update(result.poses)
        self.points.update(result.points)
        for lid, (s, e) in result.lines.items():
            if lid in self.lines:
                self.lines[lid].start, self.lines[lid].end = s, e


@dataclass(eq=False)
class FrameResult:
    index: int
    timestamp: float
    pose: Pose  # T_cw at the end of processing this frame
    mode: SceneMode
    q_feature: float
    point_counts: tuple
    line_counts: tuple
    line_work: int
    keyframe: bool
    lost: bool
    n_point_obs: int = 0
    n_line_obs: int = 0
    cost: float = float("nan")
    ref_keyframe: int = -1
    rel_pose: Pose | None = None
    grid: GridStats | None = None  # of the removal-retained points


def _lookup_prev(prev, frame):
    """Pixel in ``prev`` of each point of ``frame`` (matched by id), NaN if unseen."""
    out = np.full((frame.n_points, 2), np.nan)
    if prev.n_points == 0 or frame.n_points == 0:
        return out
    order = np.argsort(prev.point_ids, kind="stable")
    ids = prev.point_ids[order]
    pos = np.minimum(np.searchsorted(ids, frame.point_ids), len(ids) - 1)
    hit = ids[pos] == frame.point_ids
    out[hit] = prev.point_px[order[pos[hit]]]
    return out


def _line_work():
    return instrument.get(instrument.LINE_OPS) + instrument.get(instrument.LINE_RESIDUALS)


def _orient_to(K, T, S, E, s, e):
    """Return (s, e) swapped if needed so s corresponds to S."""
    uv, _ = project_points(K, T, np.stack([S, E]))
    if not np.all(np.isfinite(uv)):
        return s, e
    keep = np.linalg.norm(s - uv[0]) + np.linalg.norm(e - uv[1])
    swap = np.linalg.norm(e - uv[0]) + np.linalg.norm(s - uv[1])
    return (e, s) if swap < keep else (s, e)


class Tracker:
    """Mutable per-sequence state; feed frames in order to :meth:`process_frame`."""

    def __init__(self, K: CameraIntrinsics, config: PipelineConfig):
        self.K = K
        self.config = config
        self.map = WorldMap()
        self.results = []
        self.trace = []
        self.prev_frame = None
        self.prev_pose = None
        self.prev_lines = None  # (Line2D list, descriptor list) for prev_frame
        self.last_keyframe = None
        self.prev_inliers = None  # (id, u, v) of the previous frame's tracked points

    # -- helpers ------------------------------------------------------------

    def _log_trace(self, frame, kind, trace):
        for it, cost, lam, step, acc in trace:
            self.trace.append(f"{frame} {kind} {it} {cost!r} {lam!r} {step!r} {int(acc)}")

    def _prev_pixels(self, frame):
        """Pixel of each current point in the previous frame, NaN if unseen."""
        out = np.full((frame.n_points, 2), np.nan)
        prev = self.prev_frame
        if prev is None or prev.n_points == 0 or frame.n_points == 0:
            return out
        return _lookup_prev(prev, frame)

    def _extract_lines(self, frame):
        lines, descs = [], []
        for k in range(frame.n_lines):
            l = sample_line(frame.line_px[k, 0], frame.line_px[k, 1])
            lines.append(l)
            descs.append(make_descriptor(l, frame.line_response[k]))
        return lines, descs

    def _point_obs(self, frame, idx):
        obs, used = [], []
        for k in idx:
            pid = int(frame.point_ids[k])
            P = self.map.points.get(pid)
            if P is not None:
                obs.append(PointObservation(frame.point_px[k], P))
                used.append(k)
        return obs, used

    def _cull(self, outliers, frame):
        for k in outliers:
            pid = int(frame.point_ids[k])
            n = self.map.strikes.get(pid, 0) + 1
            if n >= self.config.cull_strikes:
                self.map.drop_point(pid)
            else:
                self.map.strikes[pid] = n

    def _add_map_points(self, frame, idx, pose, kf=None):
        new = [k for k in idx if int(frame.point_ids[k]) not in self.map.points]
        if not new:
            return
        new = np.asarray(new)
        Xc = backproject_points(self.K, frame.point_px[new], frame.point_depth[new])
        Xw = pose.inverse().apply(Xc)
        for k, X in zip(new, Xw):
            pid = int(frame.point_ids[k])
            self.map.points[pid] = X
            self.map.point_obs[pid] = []
            if kf is not None:
                self.map.point_obs[pid].append((kf, float(frame.point_px[k, 0]), float(frame.point_px[k, 1])))

    def _add_map_line(self, frame, k, line, pose, kf):
        Xc = backproject_points(self.K, np.stack([line.start, line.end]), frame.line_depth[k])
        S, E = pose.inverse().apply(Xc)
        if np.linalg.norm(E - S) <= 0:
            return
        lid = self.map.next_line_id
        self.map.next_line_id += 1
        self.map.lines[lid] = MapLine(S, E, float(frame.line_response[k]), [(kf, *line.start, *line.end)], int(frame.line_ids[k]))

    def _entering_lines(self):
        """True on a Point -> PointLine switch after a tracked frame."""
        if not self.results or self.prev_inliers is None:
            return False
        last = self.results[-1]
        return last.mode is SceneMode.POINT and not last.lost and last.index not in self.map.keyframes

    def _seed_lines_from_previous(self, cur_lines, cur_desc, kept):
        """Promote the previous (well-tracked) frame to a keyframe and create
        map lines from its lines that match a retained current line."""
        cfg = self.config
        prev = self.prev_frame
        if self.prev_lines is None:
            self.prev_lines = self._extract_lines(prev)
        p_lines, p_desc = self.prev_lines
        if not p_lines or not kept:
            return
        matches = match_lines(p_desc, [cur_desc[k] for k in kept], cfg.line_max_dist, cfg.line_ratio)
        if not matches:
            return
        kf = prev.index
        self.map.keyframes[kf] = self.prev_pose
        for pid, u, v in self.prev_inliers:
            if pid in self.map.point_obs:
                self.map.point_obs[pid].append((kf, u, v))
        for m in matches:
            self._add_map_line(prev, m.index_i, p_lines[m.index_i], self.prev_pose, kf)
        last = self.results[-1]
        last.keyframe = True
        last.ref_keyframe = kf
        last.rel_pose = Pose.identity()
        self.last_keyframe = kf

    # -- main step ----------------------------------------------------------

    def process_frame(self, frame) -> FrameResult:
        cfg = self.config
        K = self.K
        work0 = _line_work()
        first = self.prev_frame is None
        prior = self.prev_pose if not first else (frame.true_pose if cfg.init_from_gt else Pose.identity())

        px = frame.point_px
        prev_px = self._prev_pixels(frame)
        T_init = prior
        F = None
        if cfg.removal:
            stage1 = remove_dynamic_points(px, prev_px, frame.masks, None, cfg.d_th)
            if not first:
                pre_obs, _ = self._point_obs(frame, stage1.retained)
                try:
                    pre = estimate_pose(
                        K, pre_obs, [], prior, cfg.point_kernel, None, cfg.max_iters, cfg.tol
                    )
                    T_init = pre.pose
                    self._log_trace(frame.index, "prelim", pre.trace)
                except InsufficientObservations:
                    T_init = prior
                try:
                    F = fundamental_from_poses(K, self.prev_pose, T_init)
                except DegenerateBaseline:
                    F = None
            pts = remove_dynamic_points(px, prev_px, frame.masks, F, cfg.d_th) if F is not None else stage1
            # new landmarks only from features that survived a motion check
            if F is not None:
                vetted = pts.retained[np.all(np.isfinite(prev_px[pts.retained]), axis=1)]
            else:
                vetted = pts.retained
        else:
            pts = FilterOutcome(np.arange(frame.n_points))
            vetted = pts.retained
        retained = pts.retained

        stats = grid_partition((K.width, K.height), px[retained], cfg.awareness.grid_rows, cfg.awareness.grid_cols)
        q = feature_quality(stats, cfg.awareness.c_base)
        if cfg.line_policy == "always":
            mode = SceneMode.POINT_LINE
        elif cfg.line_policy == "never":
            mode = SceneMode.POINT
        else:
            mode = decide_mode(q, cfg.awareness.th)

        line_obs, line_assoc = [], []
        lines_out = FilterOutcome(np.zeros(0))
        cur_lines = None
        if mode is SceneMode.POINT_LINE:
            cur_lines, cur_desc = self._extract_lines(frame)
            prev_for_cur = [None] * len(cur_lines)
            if F is not None and cfg.removal and self.prev_frame is not None:
                if self.prev_lines is None:
                    self.prev_lines = self._extract_lines(self.prev_frame)
                p_lines, p_desc = self.prev_lines
                for m in match_lines(p_desc, cur_desc, cfg.line_max_dist, cfg.line_ratio):
                    prev_for_cur[m.index_j] = align_line_direction(cur_lines[m.index_j], p_lines[m.index_i])
            if cfg.removal:
                lines_out = remove_dynamic_lines(cur_lines, prev_for_cur, frame.masks, F, cfg.d_th)
            else:
                lines_out = FilterOutcome(np.arange(len(cur_lines)))
            kept = [int(k) for k in lines_out.retained]
            if self._entering_lines():
                self._seed_lines_from_previous(cur_lines, cur_desc, kept)
            ids = list(self.map.lines)
            if ids and kept:
                map_items = [
                    (self.map.lines[i].as_line3d(), LineDescriptor(1.0, 0.0, self.map.lines[i].response)) for i in ids
                ]
                frame_items = [(cur_lines[k], cur_desc[k]) for k in kept]
                for m in search_projection_match(
                    map_items, frame_items, K, T_init, cfg.line_window, cfg.line_max_dist, cfg.line_ratio
                ):
                    ml = self.map.lines[ids[m.index_i]]
                    k = kept[m.index_j]
                    s, e = _orient_to(K, T_init, ml.start, ml.end, cur_lines[k].start, cur_lines[k].end)
                    line_obs.append(LineObservation(s, e, ml.start, ml.end))
                    line_assoc.append((ids[m.index_i], k, s, e))

        point_obs, used = self._point_obs(frame, retained)
        lost = False
        cost = float("nan")
        try:
            res = estimate_pose(
                K, point_obs, line_obs, T_init, cfg.point_kernel, cfg.line_kernel,
                cfg.max_iters, cfg.tol, cfg.line_weight,
            )
            pose = res.pose
            cost = res.cost
            self._log_trace(frame.index, "track", res.trace)
            inlier_used = [k for k, ok in zip(used, res.point_inliers) if ok]
            self.prev_inliers = [(int(frame.point_ids[k]), float(px[k, 0]), float(px[k, 1])) for k in inlier_used]
            self._cull([k for k, ok in zip(used, res.point_inliers) if not ok], frame)
            inlier_lines = [a for a, ok in zip(line_assoc, res.line_inliers) if ok]
        except InsufficientObservations:
            if not first:
                lost = True
            pose = frame.true_pose if (cfg.oracle_relocalize or first) else prior
            inlier_used, inlier_lines = [], []
            self.prev_inliers = None

        is_kf = (frame.index % cfg.keyframe_stride == 0 or first) and not lost
        if is_kf:
            kf = frame.index
            self.map.keyframes[kf] = pose
            for k in inlier_used:
                pid = int(frame.point_ids[k])
                if pid in self.map.point_obs:
                    self.map.point_obs[pid].append((kf, float(px[k, 0]), float(px[k, 1])))
            self._add_map_points(frame, vetted, pose, kf)
            if mode is SceneMode.POINT_LINE and cur_lines is not None:
                for lid, _, s, e in inlier_lines:
                    self.map.lines[lid].obs.append((kf, *s, *e))
                associated = {a[1] for a in line_assoc}
                for k in lines_out.retained:
                    if int(k) not in associated:
                        self._add_map_line(frame, int(k), cur_lines[int(k)], pose, kf)
            pose = self._local_ba(kf, with_lines=mode is SceneMode.POINT_LINE) or pose
            self.last_keyframe = kf

        ref = self.last_keyframe if self.last_keyframe is not None else frame.index
        ref_pose = self.map.keyframes.get(ref, pose)
        result = FrameResult(
            index=frame.index,
            timestamp=frame.timestamp,
            pose=pose,
            mode=mode,
            q_feature=q,
            point_counts=pts.counts(),
            line_counts=lines_out.counts(),
            line_work=_line_work() - work0,
            keyframe=is_kf,
            lost=lost,
            n_point_obs=len(point_obs),
            n_line_obs=len(line_obs),
            cost=cost,
            ref_keyframe=ref,
            rel_pose=pose @ ref_pose.inverse(),
            grid=stats,
        )
        self.results.append(result)
        self.prev_frame = frame
        self.prev_pose = pose
        self.prev_lines = (cur_lines, cur_desc) if cur_lines is not None else None
        return result

    def _local_ba(self, kf, with_lines):
        cfg = self.config
        kfs = sorted(self.map.keyframes)[-cfg.window_size:]
        if len(kfs) < 2:
            return None
        fixed = kfs[:2] if len(kfs) > 2 else kfs[:1]
        problem = self.map.window_problem(kfs, fixed, with_lines, np.deg2rad(cfg.min_parallax_deg))
        problem.fixed |= self._weak_keyframes(problem)
        try:
            res = local_bundle_adjust(
                self.K, problem, cfg.point_kernel, cfg.line_kernel, cfg.ba_iters, cfg.tol,
                include_lines=with_lines, line_weight=cfg.line_weight,
            )
        except InsufficientObservations:
            return None
        self._log_trace(kf, "local_ba", res.trace)
        self.map.apply(res)
        return self.map.keyframes[kf]

    def _weak_keyframes(self, problem):
        """Keyframes with too few residual rows in this problem to pin their pose."""
        rows = dict.fromkeys(problem.poses, 0)
        for o in problem.point_obs:
            rows[o[0]] += 2
        for o in problem.line_obs:
            rows[o[0]] += 4
        return {k for k, n in rows.items() if n < self.config.min_keyframe_rows}

    def finish(self):
        """Global points-only refinement, then the final trajectory (T_wc)."""
        cfg = self.config
        kfs = sorted(self.map.keyframes)
        if cfg.run_global_refine and len(kfs) >= 2:
            problem = self.map.window_problem(
                kfs, kfs[:2] if len(kfs) > 2 else kfs[:1], False, np.deg2rad(cfg.min_parallax_deg)
            )
            problem.fixed |= self._weak_keyframes(problem)
            problem.lines = {lid: (ml.start, ml.end) for lid, ml in self.map.lines.items()}
            try:
                res = global_refine(self.K, problem, cfg.point_kernel, cfg.ba_iters, cfg.tol)
                self._log_trace(kfs[-1], "global", res.trace)
                self.map.keyframes.update(res.poses)
                self.map.points.update(res.points)
            except InsufficientObservations:
                pass
        entries = []
        for r in self.results:
            if r.keyframe:
                T = self.map.keyframes[r.index]
            elif r.ref_keyframe in self.map.keyframes:
                T = r.rel_pose @ self.map.keyframes[r.ref_keyframe]
            else:
                T = r.pose
            entries.append((r.timestamp, T.inverse()))
        return Trajectory(entries)


def run_sequence(frames, gt: Trajectory, config: PipelineConfig, K: CameraIntrinsics):
    """Track every frame, refine globally, and score against ``gt``.

    Returns ``(trajectory, frame_results, report, tracker)``.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError("a sequence needs at least two frames")
    tracker = Tracker(K, config)
    for fr in frames:
        tracker.process_frame(fr)
    traj = tracker.finish()
    report = evaluate(traj, gt)
    return traj, tracker.results, report, tracker


FRAME_CSV_COLUMNS = (
    "frame", "timestamp", "mode", "q_feature",
    "pts_retained", "pts_mask", "pts_epipolar",
    "lines_retained", "lines_mask", "lines_epipolar",
    "line_work", "keyframe", "lost",
    "tx", "ty", "tz", "qx", "qy", "qz", "qw",
)


def frames_csv(results, traj: Trajectory) -> str:
    rows = [",".join(FRAME_CSV_COLUMNS)]
    for r, (t, T_wc) in zip(results, traj.entries):
        q = T_wc.quaternion()
        vals = [
            str(r.index), repr(float(t)), r.mode.value, repr(float(r.q_feature)),
            *(str(c) for c in r.point_counts), *(str(c) for c in r.line_counts),
            str(r.line_work), str(int(r.keyframe)), str(int(r.lost)),
            *(repr(float(v)) for v in T_wc.translation), *(repr(float(v)) for v in q),
        ]
        rows.append(",".join(vals))
    return "\n".join(rows) + "\n"


def calibration_stats(frames, K: CameraIntrinsics, d_th=1.0, grid_rows=3, grid_cols=3, removal=True):
    """Grid statistics of the removal-retained points of each frame.

    The frames are tracked in Point mode with the same removal the pipeline
    applies, so a threshold calibrated here is met by every frame of the
    same sequence when it is run again.
    """
    frames = list(frames)
    placeholder = AwarenessConfig(c_base=1.0, th=1.0, grid_rows=grid_rows, grid_cols=grid_cols)
    cfg = PipelineConfig(awareness=placeholder, d_th=d_th, removal=removal, line_policy="never")
    tracker = Tracker(K, cfg)
    return [tracker.process_frame(fr).grid for fr in frames]
