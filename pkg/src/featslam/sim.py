"""Seeded synthetic RGB-D worlds: static points and lines, rigid movers with
detection boxes, and TUM-like camera motions.

Landmark ids: static points ``0..n_static_points-1`` then dynamic points;
the same scheme for lines. Pixel noise for frame ``f`` is drawn from a
generator keyed on ``(seed, f, stream)`` into an array indexed by landmark
id, so visibility never shifts the random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamic import DynamicMask
from .errors import InvalidConfig
from .geometry import CameraIntrinsics, Pose

PATTERNS = ("xyz", "rpy", "half", "static")
NEAR_CLIP = 0.1
MIN_LINE_PX = 15.0
STATIC_JITTER = 2e-5

_STREAM_POINT_NOISE = 1
_STREAM_LINE_NOISE = 2
_STREAM_RESPONSE = 3
_STREAM_DROPOUT = 4
_STREAM_DEPTH = 5


def default_camera():
    return CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


@dataclass(frozen=True)
class Degradation:
    """Suppress static points projecting into ``region`` for frames
    ``start..end`` inclusive, keeping the ``keep`` lowest-id ones."""

    region: tuple
    start: int
    end: int
    keep: int = 0


@dataclass(frozen=True)
class WorldConfig:
    seed: int
    n_static_points: int = 400
    n_static_lines: int = 60
    n_dynamic_objects: int = 2
    scene_extent: float = 1.0
    dynamic_speed: float = 0.02
    observation_noise_sigma: float = 0.3
    trajectory_pattern: str = "xyz"
    n_frames: int = 100
    camera: CameraIntrinsics = field(default_factory=default_camera)
    points_per_object: int = 40
    lines_per_object: int = 4
    mask_dropout: float = 0.0
    mask_margin: float = 4.0
    depth_noise_sigma: float = 0.0
    line_response_noise: float = 0.02
    fps: float = 30.0

    def __post_init__(self):
        counts = ("n_static_points", "n_static_lines", "n_dynamic_objects", "points_per_object", "lines_per_object")
        for name in counts:
            if int(getattr(self, name)) < 0:
                raise InvalidConfig(f"{name} must be >= 0", key=name)
        for name in ("observation_noise_sigma", "depth_noise_sigma", "line_response_noise", "mask_margin", "dynamic_speed"):
            if not float(getattr(self, name)) >= 0:
                raise InvalidConfig(f"{name} must be >= 0", key=name)
        if self.n_frames < 2:
            raise InvalidConfig("n_frames must be >= 2", key="n_frames")
        if not self.scene_extent > 0:
            raise InvalidConfig("scene_extent must be positive", key="scene_extent")
        if self.trajectory_pattern not in PATTERNS:
            raise InvalidConfig(f"trajectory_pattern must be one of {PATTERNS}", key="trajectory_pattern")
        if not 0 <= self.mask_dropout <= 1:
            raise InvalidConfig("mask_dropout must be in [0, 1]", key="mask_dropout")
        if not self.fps > 0:
            raise InvalidConfig("fps must be positive", key="fps")


@dataclass(frozen=True, eq=False)
class DynamicObject:
    points: np.ndarray  # (n, 3) in the object frame
    lines: np.ndarray  # (m, 2, 3) in the object frame
    responses: np.ndarray
    center: np.ndarray
    direction: np.ndarray
    amplitude: float
    period: float
    phase: float

    def offset(self, frame):
        """Object translation at ``frame``; peak speed is ``2 pi A / period``."""
        s = math.sin(2 * math.pi * frame / self.period + self.phase)
        bob = 0.1 * self.amplitude * math.sin(4 * math.pi * frame / self.period)
        return self.center + self.amplitude * s * self.direction + np.array([0.0, bob, 0.0])


@dataclass(frozen=True, eq=False)
class World:
    config: WorldConfig
    static_points: np.ndarray
    static_lines: np.ndarray  # (m, 2, 3)
    line_responses: np.ndarray
    objects: tuple
    trajectory: tuple  # T_cw per frame
    timestamps: np.ndarray
    degradations: tuple = ()

    @property
    def n_point_ids(self):
        return len(self.static_points) + sum(len(o.points) for o in self.objects)

    @property
    def n_line_ids(self):
        return len(self.static_lines) + sum(len(o.lines) for o in self.objects)

    def dynamic_points_at(self, frame):
        if not self.objects:
            return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
        pts = [o.points + o.offset(frame) for o in self.objects]
        obj = [np.full(len(o.points), k) for k, o in enumerate(self.objects)]
        return np.concatenate(pts), np.concatenate(obj)

    def dynamic_lines_at(self, frame):
        if not self.objects or not any(len(o.lines) for o in self.objects):
            return np.zeros((0, 2, 3)), np.zeros(0, dtype=np.int64), np.zeros(0)
        lns = [o.lines + o.offset(frame) for o in self.objects]
        obj = [np.full(len(o.lines), k) for k, o in enumerate(self.objects)]
        resp = [o.responses for o in self.objects]
        return np.concatenate(lns), np.concatenate(obj), np.concatenate(resp)


@dataclass(frozen=True, eq=False)
class SimFrame:
    index: int
    timestamp: float
    true_pose: Pose
    point_ids: np.ndarray
    point_px: np.ndarray
    point_depth: np.ndarray
    point_dynamic: np.ndarray
    point_object: np.ndarray
    line_ids: np.ndarray
    line_px: np.ndarray  # (m, 2, 2) endpoints, lexicographic order
    line_depth: np.ndarray  # (m, 2)
    line_dynamic: np.ndarray
    line_object: np.ndarray
    line_response: np.ndarray
    masks: DynamicMask

    @property
    def n_points(self):
        return len(self.point_ids)

    @property
    def n_lines(self):
        return len(self.line_ids)


def _look_at(position, target):
    z = target - position
    z = z / np.linalg.norm(z)
    x = np.cross(np.array([0.0, 1.0, 0.0]), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R_wc = np.column_stack([x, y, z])
    return Pose(R_wc, position).inverse()


def _euler_rotation(roll, pitch, yaw):
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1.0]])  # roll about optical axis
    Rx = np.array([[1.0, 0, 0], [0, cp, -sp], [0, sp, cp]])
    Ry = np.array([[cy, 0, sy], [0, 1.0, 0], [-sy, 0, cy]])
    return Ry @ Rx @ Rz


def scene_center(extent):
    return np.array([0.0, 0.0, 2.0 * extent])


def hemisphere_radius(extent):
    return 2.0 * extent


def generate_trajectory(pattern: str, n_frames: int, extent: float = 1.0):
    """Camera poses ``T_cw`` for one of the motion patterns.

    ``xyz`` translates on sinusoids with fixed orientation, ``rpy`` rotates
    in place, ``half`` sweeps an arc on a sphere of radius ``2 * extent``
    around the scene center while looking at it, ``static`` holds still up
    to a 2e-5 jitter.
    """
    if n_frames < 2:
        raise InvalidConfig("n_frames must be >= 2", key="n_frames")
    poses = []
    for f in range(n_frames):
        s = f / n_frames
        if pattern == "xyz":
            c = 0.25 * extent * np.array(
                [
                    math.sin(2 * math.pi * s),
                    0.6 * math.sin(2 * math.pi * 1.5 * s + 0.5) - 0.6 * math.sin(0.5),
                    0.5 * math.sin(2 * math.pi * 0.75 * s + 1.0) - 0.5 * math.sin(1.0),
                ]
            )
            poses.append(Pose(np.eye(3), -c))
        elif pattern == "rpy":
            R_wc = _euler_rotation(
                0.12 * math.sin(2 * math.pi * 1.5 * s),
                0.10 * math.sin(2 * math.pi * s + 0.3) - 0.10 * math.sin(0.3),
                0.15 * math.sin(2 * math.pi * s),
            )
            poses.append(Pose(R_wc.T, np.zeros(3)))
        elif pattern == "half":
            C = scene_center(extent)
            r = hemisphere_radius(extent)
            az = 0.45 * math.sin(2 * math.pi * s)
            el = 0.15 * math.sin(2 * math.pi * 2 * s)
            pos = C + r * np.array([math.sin(az) * math.cos(el), math.sin(el), -math.cos(az) * math.cos(el)])
            poses.append(_look_at(pos, C))
        elif pattern == "static":
            j = STATIC_JITTER * np.array([math.sin(1.3 * f), math.sin(1.7 * f + 1.0), math.sin(2.1 * f + 2.0)])
            poses.append(Pose(np.eye(3), -j))
        else:
            raise InvalidConfig(f"unknown trajectory pattern {pattern!r}", key="trajectory_pattern")
    return poses


def _random_segments(rng, n, lo, hi, min_len, max_len):
    mids = rng.uniform(lo, hi, size=(n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    half = 0.5 * rng.uniform(min_len, max_len, size=n)
    return np.stack([mids - half[:, None] * d, mids + half[:, None] * d], axis=1)


def generate_world(config: WorldConfig) -> World:
    """Place landmarks and movers; identical configs give identical worlds."""
    if not isinstance(config, WorldConfig):
        raise InvalidConfig("generate_world expects a WorldConfig")
    e = config.scene_extent
    rng = np.random.default_rng([config.seed, 0])
    lo = np.array([-2.0, -1.5, 1.5])
    hi = np.array([2.0, 1.5, 4.5])
    static_points = e * rng.uniform(lo, hi, size=(config.n_static_points, 3))
    static_lines = e * _random_segments(rng, config.n_static_lines, lo, hi, 0.3, 0.9)
    responses = rng.uniform(0.5, 3.0, size=config.n_static_lines)

    objects = []
    half_size = np.array([0.25, 0.45, 0.15])
    for k in range(config.n_dynamic_objects):
        pts = e * rng.uniform(-half_size, half_size, size=(config.points_per_object, 3))
        lns = e * _random_segments(rng, config.lines_per_object, -half_size, half_size, 0.2, 0.4)
        resp = rng.uniform(0.5, 3.0, size=config.lines_per_object)
        x0 = (-0.5 + k / max(1, config.n_dynamic_objects - 1)) * e if config.n_dynamic_objects > 1 else 0.0
        center = np.array([x0, 0.1 * e, rng.uniform(1.8, 2.4) * e])
        ang = rng.uniform(-0.4, 0.4)
        direction = np.array([math.cos(ang), 0.0, math.sin(ang)])
        period = float(rng.uniform(50, 90))
        amplitude = config.dynamic_speed * period / (2 * math.pi)
        objects.append(
            DynamicObject(pts, lns, resp, center, direction, amplitude, period, float(rng.uniform(0, 2 * math.pi)))
        )

    trajectory = tuple(generate_trajectory(config.trajectory_pattern, config.n_frames, e))
    timestamps = np.arange(config.n_frames) / config.fps
    return World(config, static_points, static_lines, responses, tuple(objects), trajectory, timestamps)


def degrade_texture(world: World, region, start: int, end: int, keep: int = 0) -> World:
    """World variant in which static points inside ``region`` vanish during
    frames ``start..end``, bar the ``keep`` lowest-id survivors."""
    u0, v0, u1, v1 = (float(x) for x in region)
    if u1 <= u0 or v1 <= v0:
        return world
    deg = Degradation((u0, v0, u1, v1), int(start), int(end), int(keep))
    return replace(world, degradations=world.degradations + (deg,))


def _frame_rng(seed, frame, stream):
    return np.random.default_rng([seed, frame + 1, stream])


def _project(K, T, X):
    Xc = T.apply(X)
    z = Xc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([K.fx * Xc[:, 0] / z + K.cx, K.fy * Xc[:, 1] / z + K.cy])
    return uv, z


def _inside(K, uv):
    return (uv[:, 0] >= 0) & (uv[:, 0] < K.width) & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)


def render_frame(world: World, frame: int, pose: Pose | None = None) -> SimFrame:
    """Observe the world from ``pose`` (the ground-truth pose by default)."""
    cfg = world.config
    K = cfg.camera
    T = world.trajectory[frame] if pose is None else pose
    sigma = cfg.observation_noise_sigma

    # points
    dyn_pts, dyn_obj = world.dynamic_points_at(frame)
    X = np.concatenate([world.static_points, dyn_pts]) if len(dyn_pts) else world.static_points
    n_static = len(world.static_points)
    obj = np.concatenate([np.full(n_static, -1), dyn_obj]).astype(np.int64)
    clean, z = _project(K, T, X)
    noise = _frame_rng(cfg.seed, frame, _STREAM_POINT_NOISE).normal(size=(len(X), 2))
    uv = clean + sigma * noise
    vis = (z > NEAR_CLIP) & _inside(K, clean) & _inside(K, uv)
    for deg in world.degradations:
        if deg.start <= frame <= deg.end:
            u0, v0, u1, v1 = deg.region
            hit = (
                vis
                & (obj < 0)
                & (clean[:, 0] >= u0) & (clean[:, 0] <= u1)
                & (clean[:, 1] >= v0) & (clean[:, 1] <= v1)
            )
            hit_ids = np.flatnonzero(hit)
            vis[hit_ids[deg.keep:]] = False
    ids = np.flatnonzero(vis)
    depth = z[ids]
    if cfg.depth_noise_sigma > 0:
        dn = _frame_rng(cfg.seed, frame, _STREAM_DEPTH).normal(size=len(X))
        depth = np.maximum(depth + cfg.depth_noise_sigma * dn[ids], NEAR_CLIP)

    # lines
    dyn_lns, dyn_lobj, dyn_resp = world.dynamic_lines_at(frame)
    L = np.concatenate([world.static_lines, dyn_lns]) if len(dyn_lns) else world.static_lines
    L = L.reshape(-1, 2, 3)
    n_static_l = len(world.static_lines)
    lobj = np.concatenate([np.full(n_static_l, -1), dyn_lobj]).astype(np.int64)
    base_resp = np.concatenate([world.line_responses, dyn_resp]) if len(dyn_resp) else world.line_responses
    luv_clean, lz = _project(K, T, L.reshape(-1, 3))
    luv_clean = luv_clean.reshape(-1, 2, 2)
    lz = lz.reshape(-1, 2)
    lnoise = _frame_rng(cfg.seed, frame, _STREAM_LINE_NOISE).normal(size=(len(L), 2, 2))
    luv = luv_clean + sigma * lnoise
    rnoise = _frame_rng(cfg.seed, frame, _STREAM_RESPONSE).normal(size=len(L))
    resp_all = np.maximum(base_resp + cfg.line_response_noise * rnoise, 0.0)
    lvis = (
        np.all(lz > NEAR_CLIP, axis=1)
        & _inside(K, luv_clean.reshape(-1, 2)).reshape(-1, 2).all(axis=1)
        & _inside(K, luv.reshape(-1, 2)).reshape(-1, 2).all(axis=1)
    )
    with np.errstate(invalid="ignore"):
        lvis &= np.linalg.norm(luv_clean[:, 1] - luv_clean[:, 0], axis=1) >= MIN_LINE_PX
    lids = np.flatnonzero(lvis)
    lpx = luv[lids].copy()
    ldepth = lz[lids].copy()
    # endpoint order as a detector would report it: lexicographic
    swap = (lpx[:, 1, 0] < lpx[:, 0, 0]) | ((lpx[:, 1, 0] == lpx[:, 0, 0]) & (lpx[:, 1, 1] < lpx[:, 0, 1]))
    lpx[swap] = lpx[swap][:, ::-1]
    ldepth[swap] = ldepth[swap][:, ::-1]

    # detection boxes around each mover's observations
    drop = _frame_rng(cfg.seed, frame, _STREAM_DROPOUT).random(size=max(1, len(world.objects)))
    rects = []
    for k in range(len(world.objects)):
        if drop[k] < cfg.mask_dropout:
            continue
        pk = uv[ids][obj[ids] == k]
        lk = lpx[lobj[lids] == k].reshape(-1, 2)
        allpx = np.concatenate([pk, lk])
        if len(allpx) == 0:
            continue
        m = cfg.mask_margin
        rects.append(
            (
                max(0.0, float(allpx[:, 0].min()) - m),
                max(0.0, float(allpx[:, 1].min()) - m),
                min(float(K.width), float(allpx[:, 0].max()) + m),
                min(float(K.height), float(allpx[:, 1].max()) + m),
            )
        )

    return SimFrame(
        index=frame,
        timestamp=float(world.timestamps[frame]),
        true_pose=T,
        point_ids=ids.astype(np.int64),
        point_px=uv[ids],
        point_depth=depth,
        point_dynamic=obj[ids] >= 0,
        point_object=obj[ids],
        line_ids=lids.astype(np.int64),
        line_px=lpx,
        line_depth=ldepth,
        line_dynamic=lobj[lids] >= 0,
        line_object=lobj[lids],
        line_response=resp_all[lids],
        masks=DynamicMask(tuple(rects)),
    )


def render_sequence(world: World):
    return [render_frame(world, f) for f in range(world.config.n_frames)]


def ground_truth(world: World):
    """Ground-truth trajectory as ``(timestamp, T_wc)`` pairs."""
    from .metrics import Trajectory

    return Trajectory([(float(t), T.inverse()) for t, T in zip(world.timestamps, world.trajectory)])


# --- export / import -----------------------------------------------------------

OBS_HEADER = (
    "# frame P id u v depth dynamic object\n"
    "# frame L id u0 v0 u1 v1 depth0 depth1 dynamic object response\n"
    "# frame M object u0 v0 u1 v1\n"
)


def _f(x):
    return repr(float(x))


def format_observations(frames) -> str:
    out = [OBS_HEADER]
    for fr in frames:
        f = fr.index
        for k in range(fr.n_points):
            u, v = fr.point_px[k]
            out.append(
                f"{f} P {int(fr.point_ids[k])} {_f(u)} {_f(v)} {_f(fr.point_depth[k])} "
                f"{int(fr.point_dynamic[k])} {int(fr.point_object[k])}\n"
            )
        for k in range(fr.n_lines):
            (u0, v0), (u1, v1) = fr.line_px[k]
            d0, d1 = fr.line_depth[k]
            out.append(
                f"{f} L {int(fr.line_ids[k])} {_f(u0)} {_f(v0)} {_f(u1)} {_f(v1)} {_f(d0)} {_f(d1)} "
                f"{int(fr.line_dynamic[k])} {int(fr.line_object[k])} {_f(fr.line_response[k])}\n"
            )
        for j, (u0, v0, u1, v1) in enumerate(fr.masks.regions):
            out.append(f"{f} M {j} {_f(u0)} {_f(v0)} {_f(u1)} {_f(v1)}\n")
    return "".join(out)


def parse_observations(text: str, gt_trajectory, n_frames=None):
    """Inverse of :func:`format_observations`; poses and timestamps come from
    the ground-truth trajectory (``T_wc`` entries)."""
    from .errors import ParseError

    entries = list(gt_trajectory.entries)
    n = n_frames if n_frames is not None else len(entries)
    pts = [[] for _ in range(n)]
    lns = [[] for _ in range(n)]
    masks = [[] for _ in range(n)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            f = int(tok[0])
            kind = tok[1]
            if not 0 <= f < n:
                raise ParseError(f"frame index {f} out of range", lineno)
            if kind == "P" and len(tok) == 8:
                pts[f].append((int(tok[2]), float(tok[3]), float(tok[4]), float(tok[5]), int(tok[6]), int(tok[7])))
            elif kind == "L" and len(tok) == 12:
                lns[f].append(
                    (int(tok[2]), *(float(x) for x in tok[3:9]), int(tok[9]), int(tok[10]), float(tok[11]))
                )
            elif kind == "M" and len(tok) == 7:
                masks[f].append(tuple(float(x) for x in tok[3:7]))
            else:
                raise ParseError(f"malformed {kind!r} record with {len(tok)} fields", lineno)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from exc

    frames = []
    for f in range(n):
        t, T_wc = entries[f]
        p = pts[f]
        l = lns[f]
        frames.append(
            SimFrame(
                index=f,
                timestamp=t,
                true_pose=T_wc.inverse(),
                point_ids=np.array([r[0] for r in p], dtype=np.int64),
                point_px=np.array([r[1:3] for r in p], dtype=float).reshape(-1, 2),
                point_depth=np.array([r[3] for r in p], dtype=float),
                point_dynamic=np.array([r[4] for r in p], dtype=bool),
                point_object=np.array([r[5] for r in p], dtype=np.int64),
                line_ids=np.array([r[0] for r in l], dtype=np.int64),
                line_px=np.array([r[1:5] for r in l], dtype=float).reshape(-1, 2, 2),
                line_depth=np.array([r[5:7] for r in l], dtype=float).reshape(-1, 2),
                line_dynamic=np.array([r[7] for r in l], dtype=bool),
                line_object=np.array([r[8] for r in l], dtype=np.int64),
                line_response=np.array([r[9] for r in l], dtype=float),
                masks=DynamicMask(tuple(masks[f])),
            )
        )
    return frames
