"""numba-compiled twins of the kernels in ``_numpy``.

Loops are written out explicitly; no ``fastmath`` or ``parallel`` so results
stay deterministic run to run.
"""

import numpy as np
from numba import njit

DEPTH_EPS = 1e-9


@njit(cache=True)
def point_jacobians(cam, R, t, P, uv):
    fx, fy, cx, cy = cam[0], cam[1], cam[2], cam[3]
    n = P.shape[0]
    r = np.zeros((n, 2))
    J_pose = np.zeros((n, 2, 6))
    J_point = np.zeros((n, 2, 3))
    valid = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        x = R[i, 0, 0] * P[i, 0] + R[i, 0, 1] * P[i, 1] + R[i, 0, 2] * P[i, 2] + t[i, 0]
        y = R[i, 1, 0] * P[i, 0] + R[i, 1, 1] * P[i, 1] + R[i, 1, 2] * P[i, 2] + t[i, 1]
        z = R[i, 2, 0] * P[i, 0] + R[i, 2, 1] * P[i, 1] + R[i, 2, 2] * P[i, 2] + t[i, 2]
        if not z > DEPTH_EPS:
            continue
        valid[i] = True
        iz = 1.0 / z
        r[i, 0] = uv[i, 0] - (fx * x * iz + cx)
        r[i, 1] = uv[i, 1] - (fy * y * iz + cy)
        a0 = fx * iz
        a2 = -fx * x * iz * iz
        b1 = fy * iz
        b2 = -fy * y * iz * iz
        # -(dpi/dX) [I, -[X]x]
        J_pose[i, 0, 0] = -a0
        J_pose[i, 0, 1] = 0.0
        J_pose[i, 0, 2] = -a2
        J_pose[i, 0, 3] = -(a2 * y)
        J_pose[i, 0, 4] = -(a0 * z - a2 * x)
        J_pose[i, 0, 5] = -(-a0 * y)
        J_pose[i, 1, 0] = 0.0
        J_pose[i, 1, 1] = -b1
        J_pose[i, 1, 2] = -b2
        J_pose[i, 1, 3] = -(-b1 * z + b2 * y)
        J_pose[i, 1, 4] = -(-b2 * x)
        J_pose[i, 1, 5] = -(b1 * x)
        for k in range(3):
            J_point[i, 0, k] = -(a0 * R[i, 0, k] + a2 * R[i, 2, k])
            J_point[i, 1, k] = -(b1 * R[i, 1, k] + b2 * R[i, 2, k])
    return r, J_pose, J_point, valid


@njit(cache=True)
def epipolar_distances(F, xi, xj):
    n = xi.shape[0]
    out = np.empty(n)
    for i in range(n):
        a = F[0, 0] * xi[i, 0] + F[0, 1] * xi[i, 1] + F[0, 2]
        b = F[1, 0] * xi[i, 0] + F[1, 1] * xi[i, 1] + F[1, 2]
        c = F[2, 0] * xi[i, 0] + F[2, 1] * xi[i, 1] + F[2, 2]
        norm = np.hypot(a, b)
        if norm < 1e-12:
            out[i] = np.nan
        else:
            out[i] = abs(a * xj[i, 0] + b * xj[i, 1] + c) / norm
    return out


@njit(cache=True)
def grid_stats(px, width, height, rows, cols):
    G = rows * cols
    counts = np.zeros(G, dtype=np.int64)
    su = np.zeros(G)
    sv = np.zeros(G)
    n = px.shape[0]
    idx = np.empty(n, dtype=np.int64)
    un = np.empty(n)
    vn = np.empty(n)
    cw = width / cols
    ch = height / rows
    for i in range(n):
        c = int(np.floor(px[i, 0] / cw))
        r = int(np.floor(px[i, 1] / ch))
        c = min(max(c, 0), cols - 1)
        r = min(max(r, 0), rows - 1)
        idx[i] = r * cols + c
        un[i] = (px[i, 0] - c * cw) / cw
        vn[i] = (px[i, 1] - r * ch) / ch
        counts[idx[i]] += 1
        su[idx[i]] += un[i]
        sv[idx[i]] += vn[i]
    var = np.zeros(G)
    for g in range(G):
        if counts[g] > 0:
            su[g] /= counts[g]
            sv[g] /= counts[g]
    for i in range(n):
        g = idx[i]
        du = un[i] - su[g]
        dv = vn[i] - sv[g]
        var[g] += du * du + dv * dv
    for g in range(G):
        if counts[g] < 2:
            var[g] = 0.0
        else:
            var[g] /= counts[g]
    return counts, var


@njit(cache=True)
def accumulate_blocks(Jc, Jl, r, w, cam_idx, lm_idx, n_cams, n_lms):
    m, k, bs = Jl.shape
    Hcc = np.zeros((6 * n_cams, 6 * n_cams))
    bc = np.zeros(6 * n_cams)
    Hll = np.zeros((n_lms, bs, bs))
    bl = np.zeros((n_lms, bs))
    Hcl = np.zeros((m, 6, bs))
    for o in range(m):
        c = cam_idx[o]
        l = lm_idx[o]
        wo = w[o]
        if c >= 0:
            for i in range(6):
                acc = 0.0
                for q in range(k):
                    acc += Jc[o, q, i] * r[o, q]
                bc[6 * c + i] -= wo * acc
                for j in range(6):
                    acc = 0.0
                    for q in range(k):
                        acc += Jc[o, q, i] * Jc[o, q, j]
                    Hcc[6 * c + i, 6 * c + j] += wo * acc
        if l >= 0:
            for i in range(bs):
                acc = 0.0
                for q in range(k):
                    acc += Jl[o, q, i] * r[o, q]
                bl[l, i] -= wo * acc
                for j in range(bs):
                    acc = 0.0
                    for q in range(k):
                        acc += Jl[o, q, i] * Jl[o, q, j]
                    Hll[l, i, j] += wo * acc
        if c >= 0 and l >= 0:
            for i in range(6):
                for j in range(bs):
                    acc = 0.0
                    for q in range(k):
                        acc += Jc[o, q, i] * Jl[o, q, j]
                    Hcl[o, i, j] = wo * acc
    return Hcc, bc, Hll, bl, Hcl


@njit(cache=True)
def schur_reduce(Hcc, bc, Hll_inv, bl, Hcl, cam_idx, lm_idx):
    S = Hcc.copy()
    s = bc.copy()
    m = cam_idx.shape[0]
    n_lms = Hll_inv.shape[0]
    bs = Hll_inv.shape[1]
    # bucket observations by landmark (CSR)
    cnt = np.zeros(n_lms + 1, dtype=np.int64)
    for o in range(m):
        if cam_idx[o] >= 0 and lm_idx[o] >= 0:
            cnt[lm_idx[o] + 1] += 1
    for l in range(n_lms):
        cnt[l + 1] += cnt[l]
    fill = cnt[:-1].copy()
    obs = np.empty(cnt[n_lms], dtype=np.int64)
    for o in range(m):
        if cam_idx[o] >= 0 and lm_idx[o] >= 0:
            obs[fill[lm_idx[o]]] = o
            fill[lm_idx[o]] += 1

    Y = np.zeros((6, bs))
    for l in range(n_lms):
        for ia in range(cnt[l], cnt[l + 1]):
            a = obs[ia]
            ca = cam_idx[a]
            for i in range(6):
                for j in range(bs):
                    acc = 0.0
                    for q in range(bs):
                        acc += Hcl[a, i, q] * Hll_inv[l, q, j]
                    Y[i, j] = acc
            for i in range(6):
                acc = 0.0
                for j in range(bs):
                    acc += Y[i, j] * bl[l, j]
                s[6 * ca + i] -= acc
            for ib in range(cnt[l], cnt[l + 1]):
                b = obs[ib]
                cb = cam_idx[b]
                for i in range(6):
                    for j in range(6):
                        acc = 0.0
                        for q in range(bs):
                            acc += Y[i, q] * Hcl[b, j, q]
                        S[6 * ca + i, 6 * cb + j] -= acc
    return S, s
