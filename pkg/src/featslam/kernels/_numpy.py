"""Pure-numpy reference kernels.

Every function here has a twin with the same signature in ``_numba``.
"""

import numpy as np

DEPTH_EPS = 1e-9


def point_jacobians(cam, R, t, P, uv):
    """Reprojection residuals ``uv - pi(R P + t)`` and their Jacobians.

    Args:
        cam: (4,) array ``fx, fy, cx, cy``.
        R, t: per-observation rotation (n, 3, 3) and translation (n, 3).
        P: (n, 3) world points.
        uv: (n, 2) observed pixels.

    Returns:
        r (n, 2), J_pose (n, 2, 6) w.r.t. a left tangent ``(v, w)``,
        J_point (n, 2, 3), valid (n,) bool. Rows with non-positive depth are
        zero and flagged invalid.
    """
    fx, fy, cx, cy = cam[0], cam[1], cam[2], cam[3]
    X = np.einsum("nij,nj->ni", R, P) + t
    z = X[:, 2]
    valid = z > DEPTH_EPS
    zs = np.where(valid, z, 1.0)
    inv_z = 1.0 / zs
    x, y = X[:, 0], X[:, 1]

    n = len(P)
    r = np.zeros((n, 2))
    r[:, 0] = uv[:, 0] - (fx * x * inv_z + cx)
    r[:, 1] = uv[:, 1] - (fy * y * inv_z + cy)

    # d(pi)/dX
    D = np.zeros((n, 2, 3))
    D[:, 0, 0] = fx * inv_z
    D[:, 0, 2] = -fx * x * inv_z * inv_z
    D[:, 1, 1] = fy * inv_z
    D[:, 1, 2] = -fy * y * inv_z * inv_z

    # dX/d(delta) = [I, -[X]x]
    dX = np.zeros((n, 3, 6))
    dX[:, 0, 0] = dX[:, 1, 1] = dX[:, 2, 2] = 1.0
    dX[:, 0, 4] = z
    dX[:, 0, 5] = -y
    dX[:, 1, 3] = -z
    dX[:, 1, 5] = x
    dX[:, 2, 3] = y
    dX[:, 2, 4] = -x

    J_pose = -np.einsum("nij,njk->nik", D, dX)
    J_point = -np.einsum("nij,njk->nik", D, R)
    r[~valid] = 0.0
    J_pose[~valid] = 0.0
    J_point[~valid] = 0.0
    return r, J_pose, J_point, valid


def epipolar_distances(F, xi, xj):
    """Distance of each ``xj`` to the epipolar line ``F @ xi``; NaN at the epipole."""
    n = len(xi)
    if n == 0:
        return np.zeros(0)
    hi = np.column_stack([xi, np.ones(n)])
    hj = np.column_stack([xj, np.ones(n)])
    lines = hi @ F.T
    norm = np.hypot(lines[:, 0], lines[:, 1])
    num = np.abs(np.sum(lines * hj, axis=1))
    out = np.full(n, np.nan)
    ok = norm >= 1e-12
    out[ok] = num[ok] / norm[ok]
    return out


def _cell_index(px, width, height, rows, cols):
    cw = width / cols
    ch = height / rows
    c = np.clip(np.floor(px[:, 0] / cw).astype(np.int64), 0, cols - 1)
    r = np.clip(np.floor(px[:, 1] / ch).astype(np.int64), 0, rows - 1)
    un = (px[:, 0] - c * cw) / cw
    vn = (px[:, 1] - r * ch) / ch
    return r * cols + c, un, vn


def grid_stats(px, width, height, rows, cols):
    """Per-cell counts and spatial variance in cell-normalized coordinates."""
    G = rows * cols
    counts = np.zeros(G, dtype=np.int64)
    var = np.zeros(G)
    if len(px) == 0:
        return counts, var
    idx, un, vn = _cell_index(px, width, height, rows, cols)
    counts = np.bincount(idx, minlength=G).astype(np.int64)
    safe = np.maximum(counts, 1)
    mu = np.bincount(idx, weights=un, minlength=G) / safe
    mv = np.bincount(idx, weights=vn, minlength=G) / safe
    du = un - mu[idx]
    dv = vn - mv[idx]
    var = np.bincount(idx, weights=du * du + dv * dv, minlength=G) / safe
    var[counts < 2] = 0.0
    return counts, var


def accumulate_blocks(Jc, Jl, r, w, cam_idx, lm_idx, n_cams, n_lms):
    """Weighted normal-equation blocks for a camera/landmark problem.

    ``b`` vectors hold ``-J^T W r``. Index -1 marks a fixed camera or landmark.
    """
    m, k, bs = Jl.shape
    Hcc = np.zeros((n_cams, n_cams, 6, 6))
    bc = np.zeros((n_cams, 6))
    Hll = np.zeros((n_lms, bs, bs))
    bl = np.zeros((n_lms, bs))
    Hcl = np.zeros((m, 6, bs))

    wJc = Jc * w[:, None, None]
    wJl = Jl * w[:, None, None]
    has_c = cam_idx >= 0
    has_l = lm_idx >= 0
    both = has_c & has_l

    cc = np.einsum("mki,mkj->mij", wJc[has_c], Jc[has_c])
    np.add.at(Hcc, (cam_idx[has_c], cam_idx[has_c]), cc)
    np.add.at(bc, cam_idx[has_c], -np.einsum("mki,mk->mi", wJc[has_c], r[has_c]))

    ll = np.einsum("mki,mkj->mij", wJl[has_l], Jl[has_l])
    np.add.at(Hll, lm_idx[has_l], ll)
    np.add.at(bl, lm_idx[has_l], -np.einsum("mki,mk->mi", wJl[has_l], r[has_l]))

    Hcl[both] = np.einsum("mki,mkj->mij", wJc[both], Jl[both])
    Hcc = Hcc.transpose(0, 2, 1, 3).reshape(6 * n_cams, 6 * n_cams)
    return Hcc, bc.reshape(-1), Hll, bl, Hcl


def schur_reduce(Hcc, bc, Hll_inv, bl, Hcl, cam_idx, lm_idx):
    """Eliminate landmarks: ``S = Hcc - W V^-1 W^T``, ``s = bc - W V^-1 bl``."""
    n_cams = Hcc.shape[0] // 6
    S = Hcc.reshape(n_cams, 6, n_cams, 6).transpose(0, 2, 1, 3).copy()
    s = bc.reshape(n_cams, 6).copy()
    sel = np.flatnonzero((cam_idx >= 0) & (lm_idx >= 0))
    if len(sel) == 0:
        return Hcc.copy(), bc.copy()
    order = sel[np.argsort(lm_idx[sel], kind="stable")]
    lm = lm_idx[order]
    Y = np.einsum("mij,mjk->mik", Hcl[order], Hll_inv[lm])
    np.add.at(s, cam_idx[order], -np.einsum("mij,mj->mi", Y, bl[lm]))

    # all ordered pairs of observations sharing a landmark
    _, start, size = np.unique(lm, return_index=True, return_counts=True)
    group = np.repeat(np.arange(len(start)), size)
    n_a = size[group]
    A = np.repeat(np.arange(len(order)), n_a)
    within = np.arange(n_a.sum()) - np.repeat(np.cumsum(n_a) - n_a, n_a)
    B = start[group[A]] + within
    contrib = np.einsum("pij,pkj->pik", Y[A], Hcl[order][B])
    np.add.at(S, (cam_idx[order][A], cam_idx[order][B]), -contrib)
    return S.transpose(0, 2, 1, 3).reshape(6 * n_cams, 6 * n_cams), s.reshape(-1)
