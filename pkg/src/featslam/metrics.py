"""Trajectory files, association, rigid alignment, ATE and translational RPE.

Trajectories hold camera-to-world poses (``T_wc``), as in TUM files. The
text format is one record per line, ``timestamp tx ty tz qx qy qz qw``,
with ``#`` comment lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoses, NoAssociations, ParseError
from .geometry import Pose


class Trajectory:
    def __init__(self, entries):
        entries = [(float(t), p) for t, p in entries]
        if not entries:
            raise ValueError("trajectory needs at least one entry")
        ts = [t for t, _ in entries]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        self.entries = entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def timestamps(self):
        return np.array([t for t, _ in self.entries])

    @property
    def poses(self):
        return [p for _, p in self.entries]

    def positions(self):
        return np.array([p.translation for _, p in self.entries])

    def transformed(self, T: Pose) -> "Trajectory":
        """Apply ``T`` on the world side of every pose."""
        return Trajectory([(t, T @ p) for t, p in self.entries])

    def path_length(self):
        p = self.positions()
        return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1))) if len(p) > 1 else 0.0


@dataclass(frozen=True)
class MetricReport:
    ate_rmse: float
    ate_sd: float
    rpe_t_rmse: float
    rpe_t_sd: float
    n_pairs: int

    COLUMNS = ("ate_rmse", "ate_sd", "rpe_t_rmse", "rpe_t_sd", "n_pairs")

    def as_row(self):
        return [self.ate_rmse, self.ate_sd, self.rpe_t_rmse, self.rpe_t_sd, self.n_pairs]

    def to_csv(self):
        vals = [repr(float(v)) for v in self.as_row()[:4]] + [str(self.n_pairs)]
        return ",".join(self.COLUMNS) + "\n" + ",".join(vals) + "\n"

    def to_table(self):
        return (
            f"{'metric':<12}{'rmse':>14}{'sd':>14}\n"
            f"{'ATE':<12}{self.ate_rmse:>14.6f}{self.ate_sd:>14.6f}\n"
            f"{'T.RPE':<12}{self.rpe_t_rmse:>14.6f}{self.rpe_t_sd:>14.6f}\n"
            f"pairs: {self.n_pairs}\n"
        )


def _f(x):
    return repr(float(x))


def format_trajectory(traj: Trajectory) -> str:
    lines = ["# timestamp tx ty tz qx qy qz qw\n"]
    for t, p in traj.entries:
        q = p.quaternion()
        fields = [t, *p.translation, *q]
        lines.append(" ".join(_f(v) for v in fields) + "\n")
    return "".join(lines)


def write_trajectory(traj: Trajectory, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_trajectory(traj))


def parse_trajectory(text: str) -> Trajectory:
    entries = []
    last_t = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 8:
            raise ParseError(f"expected 8 fields, got {len(tok)}", lineno)
        try:
            vals = [float(x) for x in tok]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", lineno)
        t = vals[0]
        if t <= last_t:
            raise ParseError(f"timestamp {t} is not strictly increasing", lineno)
        last_t = t
        try:
            pose = Pose.from_quaternion(vals[4:8], vals[1:4])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        entries.append((t, pose))
    if not entries:
        raise ParseError("trajectory file holds no poses")
    return Trajectory(entries)


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        return parse_trajectory(fh.read())


def associate(est: Trajectory, gt: Trajectory, max_dt: float = 0.02):
    """Greedy one-to-one nearest-timestamp matching; returns (i_est, i_gt) pairs
    sorted by estimate index."""
    if not max_dt > 0:
        raise ValueError("max_dt must be positive")
    te, tg = est.timestamps, gt.timestamps
    cand = []
    for i, t in enumerate(te):
        lo = np.searchsorted(tg, t - max_dt, side="left")
        hi = np.searchsorted(tg, t + max_dt, side="right")
        for j in range(lo, hi):
            dt = abs(tg[j] - t)
            if dt <= max_dt:
                cand.append((dt, i, j))
    cand.sort()
    used_e, used_g, pairs = set(), set(), []
    for _, i, j in cand:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        pairs.append((i, j))
    if not pairs:
        raise NoAssociations("no timestamps fall within max_dt of each other")
    pairs.sort()
    return pairs


def umeyama_align(est_positions, gt_positions):
    """Rigid (scale 1) ``(R, t)`` minimizing ``sum |gt - (R est + t)|^2``."""
    X = np.asarray(est_positions, dtype=float).reshape(-1, 3)
    Y = np.asarray(gt_positions, dtype=float).reshape(-1, 3)
    if len(X) != len(Y):
        raise ValueError("position sets differ in length")
    if len(X) < 3:
        raise DegenerateConfiguration("alignment needs at least 3 positions")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sv = np.linalg.svd(Xc, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300) or sv[0] == 0:
        raise DegenerateConfiguration("positions are collinear")
    U, _, Vt = np.linalg.svd(Yc.T @ Xc)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1
    R = U @ S @ Vt
    t = my - R @ mx
    return R, t


def _rmse_sd(err):
    err = np.asarray(err, dtype=float)
    rmse = float(np.sqrt(np.mean(err**2)))
    sd = float(np.std(err))
    return rmse, sd


def ate_errors(est: Trajectory, gt: Trajectory, align=True, max_dt=0.02):
    pairs = associate(est, gt, max_dt)
    P = np.array([est.entries[i][1].translation for i, _ in pairs])
    G = np.array([gt.entries[j][1].translation for _, j in pairs])
    if align:
        R, t = umeyama_align(P, G)
        P = P @ R.T + t
    return np.linalg.norm(G - P, axis=1)


def ate(est: Trajectory, gt: Trajectory, align=True, max_dt=0.02):
    """(RMSE, population S.D.) of absolute position errors."""
    return _rmse_sd(ate_errors(est, gt, align, max_dt))


def rpe_errors(est: Trajectory, gt: Trajectory, delta=1, max_dt=0.02):
    pairs = associate(est, gt, max_dt)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if len(pairs) < delta + 1:
        raise InsufficientPoses(f"need at least {delta + 1} associated poses, have {len(pairs)}")
    E = [est.entries[i][1] for i, _ in pairs]
    G = [gt.entries[j][1] for _, j in pairs]
    err = []
    for k in range(len(pairs) - delta):
        rel_gt = G[k].inverse() @ G[k + delta]
        rel_est = E[k].inverse() @ E[k + delta]
        err.append(np.linalg.norm((rel_gt.inverse() @ rel_est).translation))
    return np.array(err)


def rpe_translation(est: Trajectory, gt: Trajectory, delta=1, max_dt=0.02):
    return _rmse_sd(rpe_errors(est, gt, delta, max_dt))


def evaluate(est: Trajectory, gt: Trajectory, align=True, rpe_delta=1, max_dt=0.02) -> MetricReport:
    a_rmse, a_sd = ate(est, gt, align, max_dt)
    r_rmse, r_sd = rpe_translation(est, gt, rpe_delta, max_dt)
    return MetricReport(a_rmse, a_sd, r_rmse, r_sd, len(associate(est, gt, max_dt)))
