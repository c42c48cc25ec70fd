"""Compiled control-and-physics loop for obstacle-free worlds.

Runs the same hybrid controller and semi-implicit Euler step as
``World.step`` + ``compute_torque`` for all control ticks of one policy
step, without the per-call numpy overhead. The Python implementation stays
the reference; tests check the two against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .kinematics import (
    _chain_kernel,
    _crba_kernel,
    _cross,
    _jacobian_kernel,
    _rnea_kernel,
    _spatial_kernel,
)

OK = 0
NON_FINITE = 1
DEGENERATE_FORCE = 2


@njit(cache=True)
def _so3_log(R):
    c = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) * 0.5
    c = min(1.0, max(-1.0, c))
    th = np.arccos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-9:
        return 0.5 * w
    if np.pi - th < 1e-6:
        B = 0.5 * (R + np.eye(3))
        i = 0
        for j in range(1, 3):
            if B[j, j] > B[i, i]:
                i = j
        axis = B[:, i] / np.sqrt(max(B[i, i], 1e-30))
        axis = axis / np.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
        return axis * th
    return w * (th / (2.0 * np.sin(th)))


@njit(cache=True)
def _rpy_to_R(g, b, a):
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    R = np.empty((3, 3))
    R[0, 0] = ca * cb
    R[0, 1] = ca * sb * sg - sa * cg
    R[0, 2] = ca * sb * cg + sa * sg
    R[1, 0] = sa * cb
    R[1, 1] = sa * sb * sg + ca * cg
    R[1, 2] = sa * sb * cg - ca * sg
    R[2, 0] = -sb
    R[2, 1] = cb * sg
    R[2, 2] = cb * cg
    return R


@njit(cache=True)
def _rates_to_omega(rpy, rates):
    b, a = rpy[1], rpy[2]
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    return np.array([ca * cb * rates[0] - sa * rates[1],
                     sa * cb * rates[0] + ca * rates[1],
                     -sb * rates[0] + rates[2]])


@njit(cache=True)
def _filtered_pinv(J, lam):
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    n = s.shape[0]
    inv = np.empty(n)
    for i in range(n):
        si = s[i]
        if si >= 2.0 * lam:
            inv[i] = 1.0 / si
        elif si > lam:
            inv[i] = 0.5 / lam
        else:
            inv[i] = si / (si * si + lam * lam)
    return (Vt.T * inv) @ U.T


@njit(cache=True)
def _handle(frame_R, frame_p, h, revolute, theta):
    if revolute:
        c, s = np.cos(theta), np.sin(theta)
        local = np.array([c * h[0] - s * h[1], s * h[0] + c * h[1], h[2]])
        dlocal = np.array([-s * h[0] - c * h[1], c * h[0] - s * h[1], 0.0])
    else:
        local = np.array([h[0], h[1], h[2] + theta])
        dlocal = np.array([0.0, 0.0, 1.0])
    return frame_p + frame_R @ local, frame_R @ dlocal


@njit(cache=True)
def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@njit(cache=True)
def run_ticks(n_ticks, robot_arrays, tool_R, tool_p, gravity, tau_max, q_min, q_max,
              frame_R, frame_p, handle_local, revolute, obj_params, world_params,
              s_diag, Kp, Kd, pinv_damping, gravity_comp,
              F0, x0, xd0, F1, x1, xd1, open_sense,
              q, qd, theta, theta_d, attached, rel_rot, ticks):
    """Advance up to ``n_ticks`` control ticks; stops early on grasp loss or a joint limit.

    Returns ``(q, qd, theta, theta_d, attached, ticks, tau, grasp_force, status)``.
    """
    base_R, base_p, rots, offs, axes, masses, coms, inertias = robot_arrays
    dry, visc, spring_k, spring_rest, inertia, lo, hi = obj_params
    dt, Kg, Dg, Ky, Dy, yaw_lock, break_force, tol, band, joint_damping = world_params
    k = q.shape[0]
    a0 = np.zeros(6)
    a0[3:] = -gravity
    zeros = np.zeros(k)
    tau = np.zeros(k)
    f = np.zeros(3)
    fz = frame_R[:, 2].copy()
    sense = 1.0 if open_sense >= 0 else -1.0
    for j in range(1, n_ticks + 1):
        a = j / n_ticks
        F = F0 + a * (F1 - F0)
        xdes = x0 + a * (x1 - x0)
        xddes = xd0 + a * (xd1 - xd0)

        Rs, ps = _chain_kernel(base_R, base_p, rots, offs, axes, q)
        R_e = Rs[k - 1] @ tool_R
        p_e = ps[k - 1] + Rs[k - 1] @ tool_p
        Jw = _jacobian_kernel(Rs, ps, axes, p_e, k - 1)
        S, I6 = _spatial_kernel(Rs, ps, axes, masses, coms, inertias)
        M = _crba_kernel(S, I6)
        h = _rnea_kernel(S, I6, qd, zeros, a0)
        g = _rnea_kernel(S, I6, zeros, zeros, a0)

        # controller, object frame
        J = np.empty((6, k))
        J[:3] = frame_R.T @ Jw[:3]
        J[3:] = frame_R.T @ Jw[3:]
        Jp = _filtered_pinv(J, pinv_damping)
        Lam = Jp.T @ M @ Jp
        Lam = 0.5 * (Lam + Lam.T)
        p_loc = frame_R.T @ (p_e - frame_p)
        R_loc = frame_R.T @ R_e
        twist = J @ qd
        Xe = np.empty(6)
        Xe[:3] = xdes[:3] - p_loc
        Xe[3:] = _so3_log(_rpy_to_R(xdes[3], xdes[4], xdes[5]) @ R_loc.T)
        Ve = np.empty(6)
        Ve[:3] = xddes[:3] - twist[:3]
        Ve[3:] = _rates_to_omega(xdes[3:], xddes[3:]) - twist[3:]
        Fd = np.zeros(6)
        if revolute:
            t = _cross(np.array([0.0, 0.0, sense]), np.array([p_loc[0], p_loc[1], 0.0]))
            nt = np.sqrt(t[0] ** 2 + t[1] ** 2 + t[2] ** 2)
            if nt < 1e-12:
                return q, qd, theta, theta_d, attached, ticks, tau, f, DEGENERATE_FORCE
            Fd[:3] = F * t / nt
        else:
            Fd[2] = F * sense
        cmd = Lam @ (s_diag * (Kp * Xe + Kd * Ve)) + (1.0 - s_diag) * Fd
        tau = J.T @ cmd
        if gravity_comp:
            tau = tau + g
        for i in range(k):
            if not np.isfinite(tau[i]):
                return q, qd, theta, theta_d, attached, ticks, tau, f, NON_FINITE
            tau[i] = min(tau_max[i], max(-tau_max[i], tau[i]))

        # physics
        h_pt, dh_pt = _handle(frame_R, frame_p, handle_local, revolute, theta)
        ext = np.zeros(k)
        obj_force = 0.0
        f = np.zeros(3)
        if attached:
            v_e = Jw[:3] @ qd
            f = Kg * (h_pt - p_e) + Dg * (dh_pt * theta_d - v_e)
            ext += Jw[:3].T @ f
            obj_force -= dh_pt @ f
            if yaw_lock > 0.5:
                if revolute:
                    target = frame_R @ _rz(theta) @ rel_rot
                else:
                    target = frame_R @ rel_rot
                err = _so3_log(target @ R_e.T) @ fz
                w_handle = theta_d if revolute else 0.0
                rate = w_handle - fz @ (Jw[3:] @ qd)
                nvec = (Ky * err + Dy * rate) * fz
                ext += Jw[3:].T @ nvec
                if revolute:
                    obj_force -= fz @ nvec
        qdd = np.linalg.solve(M, tau - h + ext - joint_damping * qd)
        qd = qd + dt * qdd
        q = q + dt * qd

        drive = obj_force - visc * theta_d - spring_k * (theta - spring_rest)
        stuck = False
        if abs(theta_d) < band:
            if abs(drive) <= dry:
                stuck = True
                tdd = 0.0
            else:
                tdd = (drive - np.sign(drive) * dry) / inertia
        else:
            tdd = (drive - np.sign(theta_d) * dry) / inertia
        if stuck:
            new_td = 0.0
        else:
            new_td = theta_d + dt * tdd
            if theta_d != 0.0 and np.sign(new_td) != np.sign(theta_d) and dry > 0:
                new_td = 0.0
        theta_d = new_td
        theta = theta + dt * theta_d
        if theta < lo or theta > hi:
            theta = min(hi, max(lo, theta))
            theta_d = 0.0
        ticks += 1

        for i in range(k):
            if not (np.isfinite(q[i]) and np.isfinite(qd[i])):
                return q, qd, theta, theta_d, attached, ticks, tau, f, NON_FINITE
        if not np.isfinite(theta):
            return q, qd, theta, theta_d, attached, ticks, tau, f, NON_FINITE

        if attached:
            Rs2, ps2 = _chain_kernel(base_R, base_p, rots, offs, axes, q)
            pe2 = ps2[k - 1] + Rs2[k - 1] @ tool_p
            hp2, _ = _handle(frame_R, frame_p, handle_local, revolute, theta)
            d = hp2 - pe2
            sep = np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
            fn = np.sqrt(f[0] ** 2 + f[1] ** 2 + f[2] ** 2)
            if fn > break_force or sep > tol:
                attached = False
        if not attached:
            break
        limit = False
        for i in range(k):
            if q[i] <= q_min[i] or q[i] >= q_max[i]:
                limit = True
        if limit:
            break
    return q, qd, theta, theta_d, attached, ticks, tau, f, OK
