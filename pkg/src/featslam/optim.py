"""Robust point + line reprojection optimization.

Single-pose tracking (:func:`estimate_pose`), windowed bundle adjustment
with lines (:func:`local_bundle_adjust`) and points-only full-trajectory
refinement (:func:`global_refine`). All three share one damped Gauss-Newton
loop with Huber weights applied by iterative reweighting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import instrument, kernels
from .errors import InsufficientObservations, NonPositiveDepth
from .geometry import CameraIntrinsics, Pose, se3_retract

POINT_HUBER_DELTA = math.sqrt(5.991)
LINE_HUBER_DELTA = math.sqrt(9.488)

LAMBDA_INIT = 1e-4
LAMBDA_UP = 10.0
LAMBDA_DOWN = 0.1
LAMBDA_MAX = 1e10
MAX_ITERS = 20
TOL = 1e-8

TRACE_COLUMNS = ("iteration", "cost", "lambda", "update_norm", "accepted")


def huber(s, delta):
    """Huber on a squared residual: ``s`` inside the knee, linear in ``sqrt(s)`` beyond."""
    s = np.asarray(s, dtype=float)
    root = np.sqrt(s)
    out = np.where(root <= delta, s, 2.0 * delta * root - delta * delta)
    return out if out.ndim else float(out)


def huber_weight(s, delta):
    s = np.asarray(s, dtype=float)
    root = np.sqrt(s)
    return np.where(root <= delta, 1.0, delta / np.maximum(root, 1e-300))


@dataclass(frozen=True)
class RobustKernel:
    delta: float
    kind: str = "huber"

    def __post_init__(self):
        if self.kind != "huber":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if not self.delta > 0:
            raise ValueError("kernel delta must be positive")

    def rho(self, s):
        return huber(s, self.delta)

    def weight(self, s):
        return huber_weight(s, self.delta)


POINT_KERNEL = RobustKernel(POINT_HUBER_DELTA)
LINE_KERNEL = RobustKernel(LINE_HUBER_DELTA)


def _rho(kernel, s):
    return np.asarray(s, dtype=float) if kernel is None else np.asarray(kernel.rho(s), dtype=float)


def _weight(kernel, s):
    return np.ones_like(s) if kernel is None else kernel.weight(s)


@dataclass(frozen=True, eq=False)
class PointObservation:
    uv: np.ndarray
    P_w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "uv", np.asarray(self.uv, dtype=float).reshape(2))
        object.__setattr__(self, "P_w", np.asarray(self.P_w, dtype=float).reshape(3))
        if not np.all(np.isfinite(self.P_w)):
            raise ValueError("world point must be finite")


@dataclass(frozen=True, eq=False)
class LineObservation:
    s: np.ndarray
    e: np.ndarray
    S_w: np.ndarray
    E_w: np.ndarray

    def __post_init__(self):
        for name, n in (("s", 2), ("e", 2), ("S_w", 3), ("E_w", 3)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(n))


def _cam(K):
    return np.ascontiguousarray(K.params if isinstance(K, CameraIntrinsics) else K, dtype=float)


def _single_pose_terms(cam, T: Pose, P, uv):
    n = len(P)
    R = np.ascontiguousarray(np.broadcast_to(T.rotation, (n, 3, 3)))
    t = np.ascontiguousarray(np.broadcast_to(T.translation, (n, 3)))
    return kernels.point_jacobians(cam, R, t, np.ascontiguousarray(P), np.ascontiguousarray(uv))


def point_residual(K, T_cw: Pose, obs: PointObservation):
    """Returns ``(r, e_P)`` with ``r = u - pi(K T P)`` and ``e_P = |r|^2``."""
    r, _, _, valid = _single_pose_terms(_cam(K), T_cw, obs.P_w[None], obs.uv[None])
    if not valid[0]:
        raise NonPositiveDepth("point is behind the camera")
    return r[0], float(r[0] @ r[0])


def line_residual(K, T_cw: Pose, obs: LineObservation):
    """Returns the stacked endpoint residual (4,) and ``e_L``."""
    instrument.bump(instrument.LINE_RESIDUALS)
    P = np.stack([obs.S_w, obs.E_w])
    uv = np.stack([obs.s, obs.e])
    r, _, _, valid = _single_pose_terms(_cam(K), T_cw, P, uv)
    if not valid.all():
        raise NonPositiveDepth("line endpoint is behind the camera")
    r = r.reshape(4)
    return r, float(r @ r)


def point_residual_jacobians(K, T_cw: Pose, obs: PointObservation):
    """(r, d r / d pose-tangent (2, 6), d r / d P_w (2, 3))."""
    r, Jp, Jx, valid = _single_pose_terms(_cam(K), T_cw, obs.P_w[None], obs.uv[None])
    if not valid[0]:
        raise NonPositiveDepth("point is behind the camera")
    return r[0], Jp[0], Jx[0]


def line_residual_jacobians(K, T_cw: Pose, obs: LineObservation):
    """(r (4,), d r / d pose (4, 6), d r / d (S_w, E_w) (4, 6))."""
    instrument.bump(instrument.LINE_RESIDUALS)
    P = np.stack([obs.S_w, obs.E_w])
    uv = np.stack([obs.s, obs.e])
    r, Jp, Jx, valid = _single_pose_terms(_cam(K), T_cw, P, uv)
    if not valid.all():
        raise NonPositiveDepth("line endpoint is behind the camera")
    Jl = np.zeros((4, 6))
    Jl[:2, :3] = Jx[0]
    Jl[2:, 3:] = Jx[1]
    return r.reshape(4), Jp.reshape(4, 6), Jl


# --- single pose ------------------------------------------------------------


@dataclass(eq=False)
class PoseResult:
    pose: Pose
    point_inliers: np.ndarray
    line_inliers: np.ndarray
    cost: float
    initial_cost: float
    converged: bool
    iterations: int
    n_invalid: int = 0
    trace: list = field(default_factory=list)


class _PoseProblem:
    def __init__(self, cam, P, uv, LS, LE, ls, le, pk, lk, line_weight):
        self.cam, self.P, self.uv = cam, P, uv
        self.LP = np.concatenate([LS, LE]) if len(LS) else np.zeros((0, 3))
        self.luv = np.concatenate([ls, le]) if len(ls) else np.zeros((0, 2))
        self.n_lines = len(LS)
        self.pk, self.lk, self.lw = pk, lk, line_weight

    def _line_terms(self, T):
        n = self.n_lines
        instrument.bump(instrument.LINE_RESIDUALS, n)
        r, J, _, valid = _single_pose_terms(self.cam, T, self.LP, self.luv)
        r = np.concatenate([r[:n], r[n:]], axis=1)
        J = np.concatenate([J[:n], J[n:]], axis=1)
        return r, J, valid[:n] & valid[n:]

    def cost(self, T):
        r, _, _, valid = _single_pose_terms(self.cam, T, self.P, self.uv)
        e = np.einsum("ni,ni->n", r, r)
        total = float(np.sum(_rho(self.pk, e[valid])))
        ok = bool(valid.all())
        if self.n_lines:
            rl, _, lvalid = self._line_terms(T)
            el = np.einsum("ni,ni->n", rl, rl)
            total += self.lw * float(np.sum(_rho(self.lk, el[lvalid])))
            ok = ok and bool(lvalid.all())
        return total, ok

    def linearize(self, T):
        r, J, _, valid = _single_pose_terms(self.cam, T, self.P, self.uv)
        e = np.einsum("ni,ni->n", r, r)
        w = _weight(self.pk, e) * valid
        H = np.einsum("n,nki,nkj->ij", w, J, J)
        g = -np.einsum("n,nki,nk->i", w, J, r)
        cost = float(np.sum(_rho(self.pk, e[valid])))
        if self.n_lines:
            rl, Jl, lvalid = self._line_terms(T)
            el = np.einsum("ni,ni->n", rl, rl)
            wl = self.lw * _weight(self.lk, el) * lvalid
            H = H + np.einsum("n,nki,nkj->ij", wl, Jl, Jl)
            g = g - np.einsum("n,nki,nk->i", wl, Jl, rl)
            cost += self.lw * float(np.sum(_rho(self.lk, el[lvalid])))
        return cost, H, g

    def sq_errors(self, T):
        r, _, _, valid = _single_pose_terms(self.cam, T, self.P, self.uv)
        ep = np.where(valid, np.einsum("ni,ni->n", r, r), np.inf)
        if not self.n_lines:
            return ep, np.zeros(0)
        rl, _, lvalid = self._line_terms(T)
        el = np.where(lvalid, np.einsum("ni,ni->n", rl, rl), np.inf)
        return ep, el


def _damped_solve(H, g, lam):
    A = H + lam * np.diag(np.diag(H)) + 1e-12 * np.eye(len(H))
    try:
        return np.linalg.solve(A, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, g, rcond=None)[0]


def estimate_pose(
    K,
    point_obs,
    line_obs=(),
    T_init: Pose | None = None,
    point_kernel: RobustKernel | None = POINT_KERNEL,
    line_kernel: RobustKernel | None = LINE_KERNEL,
    max_iters=MAX_ITERS,
    tol=TOL,
    line_weight=1.0,
) -> PoseResult:
    """Minimize robust point and line reprojection error over one pose.

    Observations behind the camera at ``T_init`` are dropped and counted in
    ``n_invalid``. Needs at least 3 usable points, or 2 points and a line.
    Hitting ``max_iters`` is reported through ``converged``, not raised.
    """
    cam = _cam(K)
    T = T_init if T_init is not None else Pose.identity()
    point_obs = list(point_obs)
    line_obs = list(line_obs)

    P = np.array([o.P_w for o in point_obs]).reshape(-1, 3)
    uv = np.array([o.uv for o in point_obs]).reshape(-1, 2)
    _, _, _, pvalid = _single_pose_terms(cam, T, P, uv)
    if line_obs:
        LS = np.array([o.S_w for o in line_obs])
        LE = np.array([o.E_w for o in line_obs])
        ls = np.array([o.s for o in line_obs])
        le = np.array([o.e for o in line_obs])
        _, _, _, v = _single_pose_terms(cam, T, np.concatenate([LS, LE]), np.concatenate([ls, le]))
        lvalid = v[: len(line_obs)] & v[len(line_obs):]
    else:
        LS = LE = np.zeros((0, 3))
        ls = le = np.zeros((0, 2))
        lvalid = np.zeros(0, dtype=bool)
    n_invalid = int((~pvalid).sum() + (~lvalid).sum())
    n_pts, n_lines = int(pvalid.sum()), int(lvalid.sum())
    # six residual rows at least: a point gives two, a line four
    if 2 * n_pts + 4 * n_lines < 6:
        raise InsufficientObservations(f"{n_pts} points and {n_lines} lines cannot constrain a pose")

    prob = _PoseProblem(
        cam, P[pvalid], uv[pvalid], LS[lvalid], LE[lvalid], ls[lvalid], le[lvalid],
        point_kernel, line_kernel, line_weight,
    )
    cost, H, g = prob.linearize(T)
    initial_cost = cost
    lam = LAMBDA_INIT
    converged = False
    trace = []
    it = 0
    for it in range(1, max_iters + 1):
        delta = _damped_solve(H, g, lam)
        step = float(np.linalg.norm(delta))
        if step < tol:
            converged = True
            trace.append((it, cost, lam, step, False))
            break
        T_new = se3_retract(T, delta)
        new_cost, ok = prob.cost(T_new)
        accepted = ok and new_cost < cost
        trace.append((it, new_cost if accepted else cost, lam, step, accepted))
        if accepted:
            T = T_new
            lam = max(lam * LAMBDA_DOWN, 1e-12)
            cost, H, g = prob.linearize(T)
        else:
            lam *= LAMBDA_UP
            if lam > LAMBDA_MAX:
                break

    ep, el = prob.sq_errors(T)
    pin = np.zeros(len(point_obs), dtype=bool)
    lin = np.zeros(len(line_obs), dtype=bool)
    pin[pvalid] = ep <= (np.inf if point_kernel is None else point_kernel.delta**2)
    if n_lines:
        lin[lvalid] = el <= (np.inf if line_kernel is None else line_kernel.delta**2)
    return PoseResult(T, pin, lin, cost, initial_cost, converged, it, n_invalid, trace)


# --- bundle adjustment --------------------------------------------------------


@dataclass(eq=False)
class WindowProblem:
    """Keyframe poses, landmarks and the observations linking them.

    ``point_obs`` rows are ``(keyframe_id, point_id, u, v)``; ``line_obs``
    rows are ``(keyframe_id, line_id, su, sv, eu, ev)``. Lines are stored as
    ``(start, end)`` world endpoint pairs, matched to the observed endpoint
    order.
    """

    poses: dict
    points: dict
    point_obs: list
    lines: dict = field(default_factory=dict)
    line_obs: list = field(default_factory=list)
    fixed: set = field(default_factory=set)
    fixed_points: set = field(default_factory=set)  # landmarks held constant
    fixed_lines: set = field(default_factory=set)


@dataclass(eq=False)
class BAResult:
    poses: dict
    points: dict
    lines: dict
    initial_cost: float
    cost: float
    iterations: int
    converged: bool
    n_line_residuals: int
    fixed_points: set
    fixed_lines: set
    trace: list = field(default_factory=list)


class _BAState:
    """Dense arrays for one BA problem."""

    def __init__(self, problem: WindowProblem, include_lines: bool):
        kf_ids = sorted(problem.poses)
        self.kf_ids = kf_ids
        kf_pos = {k: i for i, k in enumerate(kf_ids)}
        free = [k for k in kf_ids if k not in problem.fixed]
        self.free_kf = free
        self.cam_of_kf = np.array([free.index(k) if k in free else -1 for k in kf_ids], dtype=np.int64)

        self.R = np.array([problem.poses[k].rotation for k in kf_ids])
        self.t = np.array([problem.poses[k].translation for k in kf_ids])

        pobs = [o for o in problem.point_obs if o[0] in kf_pos and o[1] in problem.points]
        self.pt_ids = sorted({o[1] for o in pobs})
        pt_pos = {p: i for i, p in enumerate(self.pt_ids)}
        self.X = np.array([problem.points[p] for p in self.pt_ids], dtype=float).reshape(-1, 3)
        self.p_kf = np.array([kf_pos[o[0]] for o in pobs], dtype=np.int64)
        self.p_lm = np.array([pt_pos[o[1]] for o in pobs], dtype=np.int64)
        self.p_uv = np.array([o[2:4] for o in pobs], dtype=float).reshape(-1, 2)

        lobs = []
        if include_lines:
            lobs = [o for o in problem.line_obs if o[0] in kf_pos and o[1] in problem.lines]
        self.ln_ids = sorted({o[1] for o in lobs})
        ln_pos = {l: i for i, l in enumerate(self.ln_ids)}
        self.Lx = np.array(
            [np.concatenate([problem.lines[l][0], problem.lines[l][1]]) for l in self.ln_ids], dtype=float
        ).reshape(-1, 6)
        self.l_kf = np.array([kf_pos[o[0]] for o in lobs], dtype=np.int64)
        self.l_lm = np.array([ln_pos[o[1]] for o in lobs], dtype=np.int64)
        self.l_uv = np.array([o[2:6] for o in lobs], dtype=float).reshape(-1, 4)

        # landmarks seen fewer than twice are not refined
        self.p_free = np.bincount(self.p_lm, minlength=len(self.pt_ids)) >= 2
        self.l_free = np.bincount(self.l_lm, minlength=len(self.ln_ids)) >= 2
        self.p_free &= np.array([p not in problem.fixed_points for p in self.pt_ids], dtype=bool)
        self.l_free &= np.array([l not in problem.fixed_lines for l in self.ln_ids], dtype=bool)
        self.p_var = np.cumsum(self.p_free) - 1
        self.l_var = np.cumsum(self.l_free) - 1
        self.n_line_evals = 0

    def poses(self):
        return {k: Pose(self.R[i], self.t[i]) for i, k in enumerate(self.kf_ids)}


def _point_block_terms(cam, R, t, X, kf, lm, uv):
    return kernels.point_jacobians(
        cam, np.ascontiguousarray(R[kf]), np.ascontiguousarray(t[kf]), np.ascontiguousarray(X[lm]), uv
    )


def _line_block_terms(cam, R, t, Lx, kf, lm, uv):
    n = len(kf)
    P = np.concatenate([Lx[lm, :3], Lx[lm, 3:]])
    obs = np.concatenate([uv[:, :2], uv[:, 2:]])
    kk = np.concatenate([kf, kf])
    r, Jc, Jx, valid = kernels.point_jacobians(
        cam, np.ascontiguousarray(R[kk]), np.ascontiguousarray(t[kk]), np.ascontiguousarray(P), obs
    )
    rl = np.concatenate([r[:n], r[n:]], axis=1)
    Jcl = np.concatenate([Jc[:n], Jc[n:]], axis=1)
    Jll = np.zeros((n, 4, 6))
    Jll[:, :2, :3] = Jx[:n]
    Jll[:, 2:, 3:] = Jx[n:]
    return rl, Jcl, Jll, valid[:n] & valid[n:]


def _ba_cost(st, cam, R, t, X, Lx, pk, lk, lw):
    cost = 0.0
    ok = True
    if len(st.p_kf):
        r, _, _, valid = _point_block_terms(cam, R, t, X, st.p_kf, st.p_lm, st.p_uv)
        e = np.einsum("ni,ni->n", r, r)
        cost += float(np.sum(_rho(pk, e[valid])))
        ok = ok and bool(valid.all())
    if len(st.l_kf):
        st.n_line_evals += len(st.l_kf)
        r, _, _, valid = _line_block_terms(cam, R, t, Lx, st.l_kf, st.l_lm, st.l_uv)
        e = np.einsum("ni,ni->n", r, r)
        cost += lw * float(np.sum(_rho(lk, e[valid])))
        ok = ok and bool(valid.all())
    return cost, ok


def _ba_linearize(st, cam, pk, lk, lw):
    n_cams = len(st.free_kf)
    cost = 0.0
    blocks = []
    Hcc = np.zeros((6 * n_cams, 6 * n_cams))
    bc = np.zeros(6 * n_cams)
    for kind in ("p", "l"):
        kf = st.p_kf if kind == "p" else st.l_kf
        if not len(kf):
            continue
        if kind == "p":
            r, Jc, Jl, valid = _point_block_terms(cam, st.R, st.t, st.X, st.p_kf, st.p_lm, st.p_uv)
            free, var, kern, scale = st.p_free, st.p_var, pk, 1.0
            lm = st.p_lm
        else:
            st.n_line_evals += len(kf)
            r, Jc, Jl, valid = _line_block_terms(cam, st.R, st.t, st.Lx, st.l_kf, st.l_lm, st.l_uv)
            free, var, kern, scale = st.l_free, st.l_var, lk, lw
            lm = st.l_lm
        e = np.einsum("ni,ni->n", r, r)
        cost += scale * float(np.sum(_rho(kern, e[valid])))
        w = np.ascontiguousarray(scale * _weight(kern, e) * valid)
        cam_idx = np.ascontiguousarray(st.cam_of_kf[kf])
        lm_idx = np.ascontiguousarray(np.where(free[lm], var[lm], -1))
        n_lms = int(free.sum())
        H1, b1, Hll, bl, Hcl = kernels.accumulate_blocks(
            np.ascontiguousarray(Jc), np.ascontiguousarray(Jl), np.ascontiguousarray(r), w,
            cam_idx, lm_idx, n_cams, n_lms,
        )
        Hcc += H1
        bc += b1
        blocks.append((kind, Hll, bl, Hcl, cam_idx, lm_idx))
    return cost, Hcc, bc, blocks


def _ba_step(st, Hcc, bc, blocks, lam):
    n_cams = len(st.free_kf)
    S = Hcc + lam * np.diag(np.diag(Hcc)) + 1e-12 * np.eye(Hcc.shape[0])
    s = bc.copy()
    reduced = []
    for kind, Hll, bl, Hcl, cam_idx, lm_idx in blocks:
        bs = Hll.shape[1]
        V = Hll + lam * Hll * np.eye(bs)[None] + 1e-12 * np.eye(bs)[None]
        V_inv = np.linalg.inv(V) if len(V) else V
        if n_cams:
            S, s = kernels.schur_reduce(S, s, np.ascontiguousarray(V_inv), bl, Hcl, cam_idx, lm_idx)
        reduced.append((kind, V_inv, bl, Hcl, cam_idx, lm_idx))
    if n_cams:
        try:
            dc = np.linalg.solve(S, s)
        except np.linalg.LinAlgError:
            dc = np.linalg.lstsq(S, s, rcond=None)[0]
    else:
        dc = np.zeros(0)
    dcc = dc.reshape(-1, 6)
    deltas = {}
    for kind, V_inv, bl, Hcl, cam_idx, lm_idx in reduced:
        rhs = bl.copy()
        sel = (cam_idx >= 0) & (lm_idx >= 0)
        if sel.any():
            np.add.at(rhs, lm_idx[sel], -np.einsum("mij,mi->mj", Hcl[sel], dcc[cam_idx[sel]]))
        deltas[kind] = np.einsum("lij,lj->li", V_inv, rhs)
    return dcc, deltas


def bundle_adjust(
    K,
    problem: WindowProblem,
    point_kernel=POINT_KERNEL,
    line_kernel=LINE_KERNEL,
    max_iters=MAX_ITERS,
    tol=TOL,
    include_lines=True,
    line_weight=1.0,
) -> BAResult:
    """Joint refinement of free poses, points and (optionally) lines."""
    cam = _cam(K)
    st = _BAState(problem, include_lines)
    lam = LAMBDA_INIT
    cost, Hcc, bc, blocks = _ba_linearize(st, cam, point_kernel, line_kernel, line_weight)
    initial_cost = cost
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        dcc, deltas = _ba_step(st, Hcc, bc, blocks, lam)
        parts = [dcc.reshape(-1)] + [d.reshape(-1) for d in deltas.values()]
        step = float(np.linalg.norm(np.concatenate(parts))) if parts else 0.0
        if step < tol:
            converged = True
            trace.append((it, cost, lam, step, False))
            break
        R_new, t_new = st.R.copy(), st.t.copy()
        for ci, k in enumerate(st.free_kf):
            i = st.kf_ids.index(k)
            T = se3_retract(Pose(st.R[i], st.t[i]), dcc[ci])
            R_new[i], t_new[i] = T.rotation, T.translation
        X_new = st.X.copy()
        if "p" in deltas and len(deltas["p"]):
            X_new[st.p_free] += deltas["p"]
        L_new = st.Lx.copy()
        if "l" in deltas and len(deltas["l"]):
            L_new[st.l_free] += deltas["l"]
        new_cost, ok = _ba_cost(st, cam, R_new, t_new, X_new, L_new, point_kernel, line_kernel, line_weight)
        accepted = ok and new_cost < cost
        trace.append((it, new_cost if accepted else cost, lam, step, accepted))
        if accepted:
            st.R, st.t, st.X, st.Lx = R_new, t_new, X_new, L_new
            lam = max(lam * LAMBDA_DOWN, 1e-12)
            cost, Hcc, bc, blocks = _ba_linearize(st, cam, point_kernel, line_kernel, line_weight)
        else:
            lam *= LAMBDA_UP
            if lam > LAMBDA_MAX:
                break

    instrument.bump(instrument.LINE_RESIDUALS, st.n_line_evals)
    points = dict(problem.points)
    for i, p in enumerate(st.pt_ids):
        points[p] = st.X[i].copy()
    lines = dict(problem.lines)
    for i, l in enumerate(st.ln_ids):
        lines[l] = (st.Lx[i, :3].copy(), st.Lx[i, 3:].copy())
    poses = dict(problem.poses)
    poses.update(st.poses())
    for k in problem.fixed:
        if k in problem.poses:
            poses[k] = problem.poses[k]
    return BAResult(
        poses=poses,
        points=points,
        lines=lines,
        initial_cost=initial_cost,
        cost=cost,
        iterations=it,
        converged=converged,
        n_line_residuals=st.n_line_evals,
        fixed_points={p for i, p in enumerate(st.pt_ids) if not st.p_free[i]},
        fixed_lines={l for i, l in enumerate(st.ln_ids) if not st.l_free[i]},
        trace=trace,
    )


def local_bundle_adjust(
    K,
    problem: WindowProblem,
    point_kernel=POINT_KERNEL,
    line_kernel=LINE_KERNEL,
    max_iters=MAX_ITERS,
    tol=TOL,
    include_lines=True,
    line_weight=1.0,
) -> BAResult:
    """Sliding-window BA over keyframe poses, map points and map lines.

    ``problem.fixed`` must name the anchor keyframe(s); those poses come back
    untouched.
    """
    if len(problem.poses) < 2:
        raise InsufficientObservations("local BA needs a window of at least two keyframes")
    if not problem.fixed:
        raise ValueError("local BA needs a fixed anchor pose")
    return bundle_adjust(K, problem, point_kernel, line_kernel, max_iters, tol, include_lines, line_weight)


def global_refine(
    K,
    problem: WindowProblem,
    point_kernel=POINT_KERNEL,
    max_iters=MAX_ITERS,
    tol=TOL,
) -> BAResult:
    """Full-trajectory BA over points only; any lines in ``problem`` are ignored.

    The first keyframe is held fixed unless ``problem.fixed`` says otherwise.
    """
    if len(problem.poses) < 2:
        raise InsufficientObservations("global refinement needs at least two keyframes")
    points_only = WindowProblem(
        poses=problem.poses,
        points=problem.points,
        point_obs=problem.point_obs,
        fixed=set(problem.fixed) or {min(problem.poses)},
    )
    before = instrument.get(instrument.LINE_RESIDUALS)
    result = bundle_adjust(K, points_only, point_kernel, None, max_iters, tol, include_lines=False)
    instrument.bump(instrument.GLOBAL_LINE_RESIDUALS, instrument.get(instrument.LINE_RESIDUALS) - before)
    result.lines = dict(problem.lines)
    return result
