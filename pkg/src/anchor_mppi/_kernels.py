"""Fused rollout + cost kernel for the ensemble planner.

Evaluates all ``M x K`` perturbed rollouts of a planning cycle in one pass
and returns the five cost terms per rollout rather than their sum, so the
same kernel serves stage I (all terms) and the noise-free stage-II
re-rollout (goal + collision). Mirrors :mod:`anchor_mppi.dynamics` and
:mod:`anchor_mppi.costs` term for term.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from anchor_mppi.spatial import nearest_bounded

TRACK, VNORM, CTRL, GOAL, COL = range(5)
N_TERMS = 5


@nb.njit(cache=True, inline="always")
def _deriv(x, u, mass, g, out):
    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    wx, wy, wz = u[1], u[2], u[3]
    out[0] = x[7]
    out[1] = x[8]
    out[2] = x[9]
    # q' = q ⊙ [0, w] / 2
    out[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    f = u[0] / mass
    out[7] = f * 2.0 * (qx * qz + qw * qy) + g[0]
    out[8] = f * 2.0 * (qy * qz - qw * qx) + g[1]
    out[9] = f * (1.0 - 2.0 * (qx * qx + qy * qy)) + g[2]


@nb.njit(cache=True)
def rk4_inplace(x, u, dt, mass, g, k1, k2, k3, k4, tmp):
    _deriv(x, u, mass, g, k1)
    for i in range(10):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _deriv(tmp, u, mass, g, k2)
    for i in range(10):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _deriv(tmp, u, mass, g, k3)
    for i in range(10):
        tmp[i] = x[i] + dt * k3[i]
    _deriv(tmp, u, mass, g, k4)
    for i in range(10):
        x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    n = math.sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6])
    for i in range(3, 7):
        x[i] /= n


@nb.njit(cache=True, parallel=True)
def rollout_terms(
    x0,  # (10,)
    nominal,  # (M, N, 4)
    noise,  # (M, K, N, 4)
    lo,  # (4,)
    hi,  # (4,)
    mass,
    g,  # (3,)
    dt,
    guide_pts,  # (M, N, 3)
    p_goal,
    v_goal,
    q_goal,
    w,  # q_track, q_vnorm, q_c, q_c_delta, q_p, q_v, q_q, C, a, d_min, d_max
    pts,
    starts,
    origin,
    dims,
    cell,
    terms,  # out (M, K, 5)
    applied,  # out (M, K, N, 4)
    states,  # out (M, K, N + 1, 10) or a (1, 1, 1, 10) dummy
    store_states,
):
    M, K, N = noise.shape[0], noise.shape[1], noise.shape[2]
    q_track, q_vnorm, q_c, q_cd = w[0], w[1], w[2], w[3]
    q_p, q_v, q_q, C, a, d_min, d_max = w[4], w[5], w[6], w[7], w[8], w[9], w[10]
    gw, gx, gy, gz = q_goal[0], q_goal[1], q_goal[2], q_goal[3]
    for b in nb.prange(M * K):
        m = b // K
        k = b % K
        x = x0.copy()
        u = np.empty(4)
        u_last = np.empty(4)
        k1 = np.empty(10)
        k2 = np.empty(10)
        k3 = np.empty(10)
        k4 = np.empty(10)
        tmp = np.empty(10)
        track = 0.0
        vnorm = 0.0
        ctrl = 0.0
        goal = 0.0
        col = 0.0
        ok = True
        if store_states:
            states[m, k, 0, :] = x
        for t in range(N):
            for c in range(4):
                v = nominal[m, t, c] + noise[m, k, t, c]
                if v < lo[c]:
                    v = lo[c]
                elif v > hi[c]:
                    v = hi[c]
                u[c] = v
                applied[m, k, t, c] = v - nominal[m, t, c]
            px, py, pz = x[0], x[1], x[2]
            vx, vy, vz = x[7], x[8], x[9]
            dx = px - guide_pts[m, t, 0]
            dy = py - guide_pts[m, t, 1]
            dz = pz - guide_pts[m, t, 2]
            track += q_track * math.sqrt(dx * dx + dy * dy + dz * dz)
            vnorm += q_vnorm * (vx * vx + vy * vy + vz * vz)
            dx = px - p_goal[0]
            dy = py - p_goal[1]
            dz = pz - p_goal[2]
            goal += q_p * math.sqrt(dx * dx + dy * dy + dz * dz)
            dx = vx - v_goal[0]
            dy = vy - v_goal[1]
            dz = vz - v_goal[2]
            goal += q_v * math.sqrt(dx * dx + dy * dy + dz * dz)
            # vector part of q ⊙ conj(q_goal); ||R R_g^T - I||_F = 2 sqrt(2 |vec|^2)
            qw, qx, qy, qz = x[3], x[4], x[5], x[6]
            ex = -qw * gx + qx * gw - qy * gz + qz * gy
            ey = -qw * gy + qx * gz + qy * gw - qz * gx
            ez = -qw * gz - qx * gy + qy * gx + qz * gw
            goal += q_q * 2.0 * math.sqrt(2.0 * (ex * ex + ey * ey + ez * ez))
            d = nearest_bounded(px, py, pz, pts, starts, origin, dims, cell, d_max, d_min)
            if d < d_min:
                col += C
            elif d < d_max:
                col += C * math.exp(-a * (d - d_min))
            if t <= N - 2:
                ctrl += q_c * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3])
                if t >= 1:
                    s = 0.0
                    for c in range(4):
                        s += (u[c] - u_last[c]) ** 2
                    ctrl += q_cd * s
            for c in range(4):
                u_last[c] = u[c]
            rk4_inplace(x, u, dt, mass, g, k1, k2, k3, k4, tmp)
            if store_states:
                states[m, k, t + 1, :] = x
            for i in range(10):
                if not math.isfinite(x[i]):
                    ok = False
            if not ok:
                break
        if ok:
            terms[m, k, TRACK] = track
            terms[m, k, VNORM] = vnorm
            terms[m, k, CTRL] = ctrl
            terms[m, k, GOAL] = goal
            terms[m, k, COL] = col
        else:
            for i in range(N_TERMS):
                terms[m, k, i] = np.inf


def weight_vector(w) -> np.ndarray:
    return np.array([w.q_track, w.q_vnorm, w.q_c, w.q_c_delta, w.q_p, w.q_v, w.q_q, w.C, w.a, w.d_min, w.d_max])
