"""Spatial math, differential kinematics and rigid-body dynamics of a serial chain.

Task-space quantities use the row order ``[x, y, z, gamma, beta, alpha]``:
linear components first, then angular velocity about the x, y and z axes of
whichever frame the Jacobian is expressed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

TASK_LABELS = ("x", "y", "z", "gamma", "beta", "alpha")
DEFAULT_DAMPING = 1e-2
GRAVITY = np.array([0.0, 0.0, -9.81])


# ----------------------------------------------------------------------------
# SO(3) helpers
# ----------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_to_R(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit ``axis``."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rpy_to_R(gamma: float, beta: float, alpha: float) -> np.ndarray:
    # R = Rz(alpha) Ry(beta) Rx(gamma)
    return rot_z(alpha) @ rot_y(beta) @ rot_x(gamma)


def R_to_rpy(R: np.ndarray) -> np.ndarray:
    sb = -R[2, 0]
    cb = np.sqrt(max(0.0, 1.0 - sb * sb))
    beta = np.arctan2(sb, cb)
    if cb > 1e-9:
        gamma = np.arctan2(R[2, 1], R[2, 2])
        alpha = np.arctan2(R[1, 0], R[0, 0])
    else:
        gamma = 0.0
        alpha = np.arctan2(-R[0, 1], R[1, 1])
    return np.array([gamma, beta, alpha])


def rpy_rates_to_omega(rpy: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Angular velocity (fixed frame) produced by roll-pitch-yaw rates."""
    gamma, beta, alpha = rpy
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    E = np.array([[ca * cb, -sa, 0.0],
                  [sa * cb, ca, 0.0],
                  [-sb, 0.0, 1.0]])
    return E @ rates


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of ``R``."""
    c = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = np.arccos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-9:
        return 0.5 * w
    if np.pi - th < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = 0.5 * (R + np.eye(3))
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / np.sqrt(max(B[i, i], 1e-30))
        axis /= np.linalg.norm(axis)
        return axis * th
    return w * (th / (2.0 * np.sin(th)))


def orientation_error(R_des: np.ndarray, R_cur: np.ndarray) -> np.ndarray:
    """Angle-axis vector of ``R_des @ R_cur.T``."""
    return so3_log(R_des @ R_cur.T)


@dataclass(frozen=True)
class Transform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ point + self.translation

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def flatten(self) -> np.ndarray:
        """Rotation (row-major, 9) followed by translation (3)."""
        return np.concatenate([self.rotation.ravel(), self.translation])

    def is_orthonormal(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return (np.max(np.abs(R.T @ R - np.eye(3))) < tol
                and abs(np.linalg.det(R) - 1.0) < tol)


# ----------------------------------------------------------------------------
# Robot model
# ----------------------------------------------------------------------------

@dataclass
class RobotModel:
    """Serial chain of revolute joints.

    Joint ``i`` sits at the origin of a frame placed by ``joint_rotations[i]``
    and ``joint_offsets[i]`` relative to link ``i-1`` (the base for ``i=0``)
    and rotates about ``joint_axes[i]`` expressed in that frame. Link ``i``
    is rigidly attached to the rotated frame. ``tool`` locates the grasp
    point on the last link.
    """

    name: str
    joint_rotations: np.ndarray
    joint_offsets: np.ndarray
    joint_axes: np.ndarray
    link_masses: np.ndarray
    link_coms: np.ndarray
    link_inertias: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    tau_max: np.ndarray
    tool: Transform = field(default_factory=Transform)
    base: Transform = field(default_factory=Transform)
    link_radius: float = 0.04
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in ("joint_rotations", "joint_offsets", "joint_axes", "link_masses",
                     "link_coms", "link_inertias", "q_min", "q_max", "tau_max", "gravity"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        k = self.dof
        if self.joint_rotations.shape != (k, 3, 3) or self.joint_offsets.shape != (k, 3):
            raise ValueError("joint frame arrays do not match the number of joints")
        if self.link_coms.shape != (k, 3) or self.link_inertias.shape != (k, 3, 3):
            raise ValueError("link inertial arrays do not match the number of joints")
        if not np.all(self.q_min < self.q_max):
            raise ValueError("q_min must be strictly below q_max")
        if np.any(self.link_masses <= 0):
            raise ValueError("link masses must be positive")
        for I in self.link_inertias:
            if np.any(np.linalg.eigvalsh(0.5 * (I + I.T)) <= 0):
                raise ValueError("link inertias must be positive definite")
        self.joint_axes = self.joint_axes / np.linalg.norm(self.joint_axes, axis=1, keepdims=True)

    @property
    def dof(self) -> int:
        return len(self.link_masses)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected a joint vector of length {self.dof}, got shape {q.shape}")
        return q


@njit(cache=True)
def _axis_rot(axis, angle):
    x, y, z = axis[0], axis[1], axis[2]
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    R = np.empty((3, 3))
    R[0, 0] = t * x * x + c
    R[0, 1] = t * x * y - s * z
    R[0, 2] = t * x * z + s * y
    R[1, 0] = t * x * y + s * z
    R[1, 1] = t * y * y + c
    R[1, 2] = t * y * z - s * x
    R[2, 0] = t * x * z - s * y
    R[2, 1] = t * y * z + s * x
    R[2, 2] = t * z * z + c
    return R


@njit(cache=True)
def _chain_kernel(base_R, base_p, rots, offs, axes, q):
    k = q.shape[0]
    Rs = np.empty((k, 3, 3))
    ps = np.empty((k, 3))
    R = base_R.copy()
    p = base_p.copy()
    for i in range(k):
        p = p + R @ offs[i]
        R = R @ rots[i] @ _axis_rot(axes[i], q[i])
        Rs[i] = R
        ps[i] = p
    return Rs, ps


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _jacobian_kernel(Rs, ps, axes, point, last):
    k = Rs.shape[0]
    J = np.zeros((6, k))
    for i in range(last + 1):
        z = Rs[i] @ axes[i]
        v = _cross(z, point - ps[i])
        for r in range(3):
            J[r, i] = v[r]
            J[3 + r, i] = z[r]
    return J


@njit(cache=True)
def _spatial_kernel(Rs, ps, axes, masses, coms, inertias):
    k = Rs.shape[0]
    S = np.empty((k, 6))
    I6 = np.zeros((k, 6, 6))
    for i in range(k):
        z = Rs[i] @ axes[i]
        pz = _cross(ps[i], z)
        for r in range(3):
            S[i, r] = z[r]
            S[i, 3 + r] = pz[r]
        m = masses[i]
        c = ps[i] + Rs[i] @ coms[i]
        Ic = Rs[i] @ inertias[i] @ Rs[i].T
        cx = np.array([[0.0, -c[2], c[1]], [c[2], 0.0, -c[0]], [-c[1], c[0], 0.0]])
        I6[i, :3, :3] = Ic - m * (cx @ cx)
        I6[i, :3, 3:] = m * cx
        I6[i, 3:, :3] = -m * cx
        for r in range(3):
            I6[i, 3 + r, 3 + r] = m
    return S, I6


@njit(cache=True)
def _crba_kernel(S, I6):
    k = S.shape[0]
    Ic = I6.copy()
    for i in range(k - 2, -1, -1):
        Ic[i] += Ic[i + 1]
    M = np.empty((k, k))
    for j in range(k):
        F = Ic[j] @ S[j]
        for i in range(j + 1):
            val = 0.0
            for r in range(6):
                val += S[i, r] * F[r]
            M[i, j] = val
            M[j, i] = val
    return M


@njit(cache=True)
def _crm(v, m):
    out = np.empty(6)
    out[:3] = _cross(v[:3], m[:3])
    out[3:] = _cross(v[3:], m[:3]) + _cross(v[:3], m[3:])
    return out


@njit(cache=True)
def _crf(v, f):
    out = np.empty(6)
    out[:3] = _cross(v[:3], f[:3]) + _cross(v[3:], f[3:])
    out[3:] = _cross(v[:3], f[3:])
    return out


@njit(cache=True)
def _rnea_kernel(S, I6, qd, qdd, a0):
    k = S.shape[0]
    v = np.zeros(6)
    a = a0.copy()
    f = np.empty((k, 6))
    for i in range(k):
        vJ = S[i] * qd[i]
        v = v + vJ
        a = a + S[i] * qdd[i] + _crm(v, vJ)
        f[i] = I6[i] @ a + _crf(v, I6[i] @ v)
    tau = np.empty(k)
    acc = np.zeros(6)
    for i in range(k - 1, -1, -1):
        acc += f[i]
        val = 0.0
        for r in range(6):
            val += S[i, r] * acc[r]
        tau[i] = val
    return tau


def _chain(model: RobotModel, q: np.ndarray):
    """World rotations (k,3,3) and origins (k,3) of every link frame."""
    return _chain_kernel(model.base.rotation, model.base.translation, model.joint_rotations,
                         model.joint_offsets, model.joint_axes, np.asarray(q, dtype=float))


def _ee_from_chain(model: RobotModel, Rs, ps):
    R = Rs[-1] @ model.tool.rotation
    p = ps[-1] + Rs[-1] @ model.tool.translation
    return R, p


def forward_kinematics(model: RobotModel, q) -> tuple[list[Transform], Transform]:
    """Per-link world transforms and the end-effector (grasp point) transform."""
    q = model.check_q(q)
    Rs, ps = _chain(model, q)
    R_e, p_e = _ee_from_chain(model, Rs, ps)
    return [Transform(R, p) for R, p in zip(Rs, ps)], Transform(R_e, p_e)


def ee_pose(model: RobotModel, q) -> Transform:
    return forward_kinematics(model, q)[1]


def point_jacobian(model: RobotModel, q, point: np.ndarray, link: int | None = None,
                   chain=None) -> np.ndarray:
    """6xk world Jacobian of a point rigidly attached to ``link`` (default: last)."""
    q = np.asarray(q, dtype=float)
    Rs, ps = chain if chain is not None else _chain(model, q)
    last = model.dof - 1 if link is None else link
    return _jacobian_kernel(Rs, ps, model.joint_axes, np.asarray(point, dtype=float), last)


def jacobian_world(model: RobotModel, q, chain=None) -> np.ndarray:
    """6xk geometric Jacobian of the grasp point in the world frame."""
    q = np.asarray(q, dtype=float)
    chain = chain if chain is not None else _chain(model, q)
    _, p_e = _ee_from_chain(model, *chain)
    return point_jacobian(model, q, p_e, chain=chain)


def express_in_frame(J_world: np.ndarray, R_frame: np.ndarray) -> np.ndarray:
    Rt = R_frame.T
    return np.vstack([Rt @ J_world[:3], Rt @ J_world[3:]])


def damped_pinv(J: np.ndarray, damping: float = DEFAULT_DAMPING) -> np.ndarray:
    """Singular-value-filtered damped least-squares pseudoinverse.

    Each singular value s maps to s/(s^2 + l^2) below s = l, to the exact
    inverse 1/s above s = 2l, and to the plateau 1/(2l) in between. The
    map is continuous and never exceeds 1/(2l).
    """
    lam = float(damping)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    inv = np.empty_like(s)
    for i, si in enumerate(s):
        if si >= 2.0 * lam:
            inv[i] = 1.0 / si
        elif si > lam:
            inv[i] = 0.5 / lam
        else:
            inv[i] = si / (si * si + lam * lam)
    return (Vt.T * inv) @ U.T


def task_inertia(J: np.ndarray, M: np.ndarray, damping: float = DEFAULT_DAMPING,
                 J_pinv: np.ndarray | None = None) -> np.ndarray:
    """Task-space inertia J+^T M J+."""
    Jp = damped_pinv(J, damping) if J_pinv is None else J_pinv
    L = Jp.T @ M @ Jp
    return 0.5 * (L + L.T)


def manipulability(J: np.ndarray) -> float:
    """Yoshikawa index sqrt(det(J J^T)); zero when the block is rank deficient."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if J.shape[0] > J.shape[1]:
        return 0.0
    d = np.linalg.det(J @ J.T)
    return float(np.sqrt(d)) if d > 0.0 else 0.0


# ----------------------------------------------------------------------------
# Dynamics
# ----------------------------------------------------------------------------

def _spatial_terms(model: RobotModel, Rs, ps):
    """World-frame motion axes S (k,6) and spatial inertias (k,6,6) about the origin."""
    return _spatial_kernel(Rs, ps, model.joint_axes, model.link_masses, model.link_coms,
                           model.link_inertias)


def joint_space_inertia(model: RobotModel, q, chain=None) -> np.ndarray:
    """Joint-space inertia matrix by the composite-rigid-body algorithm."""
    q = model.check_q(q)
    Rs, ps = chain if chain is not None else _chain(model, q)
    S, I6 = _spatial_terms(model, Rs, ps)
    return _crba_kernel(S, I6)


def inverse_dynamics(model: RobotModel, q, qd, qdd, gravity: bool = True, chain=None) -> np.ndarray:
    """Recursive Newton-Euler inverse dynamics in world coordinates."""
    q = np.asarray(q, dtype=float)
    Rs, ps = chain if chain is not None else _chain(model, q)
    S, I6 = _spatial_terms(model, Rs, ps)
    a0 = np.zeros(6)
    if gravity:
        a0[3:] = -model.gravity
    return _rnea_kernel(S, I6, np.asarray(qd, dtype=float), np.asarray(qdd, dtype=float), a0)


def bias_forces(model: RobotModel, q, qd, gravity: bool = True, chain=None) -> np.ndarray:
    """Coriolis, centrifugal and (optionally) gravity torques."""
    return inverse_dynamics(model, q, qd, np.zeros(model.dof), gravity=gravity, chain=chain)


def gravity_torque(model: RobotModel, q, chain=None) -> np.ndarray:
    k = model.dof
    return inverse_dynamics(model, q, np.zeros(k), np.zeros(k), gravity=True, chain=chain)


def kinetic_energy(model: RobotModel, q, qd) -> float:
    """Sum over links of translational and rotational kinetic energy."""
    q = model.check_q(q)
    qd = np.asarray(qd, dtype=float)
    Rs, ps = _chain(model, q)
    T = 0.0
    for i in range(model.dof):
        c = ps[i] + Rs[i] @ model.link_coms[i]
        Jc = point_jacobian(model, q, c, link=i, chain=(Rs, ps))
        v = Jc[:3] @ qd
        w = Jc[3:] @ qd
        Iw = Rs[i] @ model.link_inertias[i] @ Rs[i].T
        T += 0.5 * model.link_masses[i] * v @ v + 0.5 * w @ Iw @ w
    return float(T)


def potential_energy(model: RobotModel, q) -> float:
    Rs, ps = _chain(model, np.asarray(q, dtype=float))
    U = 0.0
    for i in range(model.dof):
        c = ps[i] + Rs[i] @ model.link_coms[i]
        U -= model.link_masses[i] * model.gravity @ c
    return float(U)


@dataclass
class RobotTerms:
    """Everything the simulator and controller need from one configuration."""

    chain: tuple
    R_e: np.ndarray
    p_e: np.ndarray
    J: np.ndarray      # world frame, grasp point
    M: np.ndarray
    h: np.ndarray      # Coriolis + centrifugal + gravity
    g: np.ndarray      # gravity only


def robot_terms(model: RobotModel, q, qd) -> RobotTerms:
    chain = _chain(model, q)
    Rs, ps = chain
    R_e, p_e = _ee_from_chain(model, Rs, ps)
    J = _jacobian_kernel(Rs, ps, model.joint_axes, p_e, model.dof - 1)
    S, I6 = _spatial_terms(model, Rs, ps)
    M = _crba_kernel(S, I6)
    a0 = np.zeros(6)
    a0[3:] = -model.gravity
    zeros = np.zeros(model.dof)
    h = _rnea_kernel(S, I6, np.asarray(qd, dtype=float), zeros, a0)
    g = _rnea_kernel(S, I6, zeros, zeros, a0)
    return RobotTerms(chain, R_e, p_e, J, M, h, g)


# ----------------------------------------------------------------------------
# Jacobian bundle
# ----------------------------------------------------------------------------

@dataclass
class JacobianBundle:
    J: np.ndarray
    J_pinv: np.ndarray
    Lambda: np.ndarray
    w: float
    M: np.ndarray
    ee: Transform


def geometric_jacobian(model: RobotModel, q, frame=None, damping: float = DEFAULT_DAMPING,
                       task_rows=None, terms: RobotTerms | None = None) -> JacobianBundle:
    """Jacobian, damped pseudoinverse, task inertia and manipulability in ``frame``.

    ``frame`` is a Transform (or anything with a ``pose`` Transform); ``None``
    means the world frame. ``task_rows`` selects the rows the manipulability
    index is computed over (all six by default).
    """
    if terms is None:
        q = model.check_q(q)
        chain = _chain(model, q)
        R_e, p_e = _ee_from_chain(model, *chain)
        J = point_jacobian(model, q, p_e, chain=chain)
        M = joint_space_inertia(model, q, chain=chain)
    else:
        R_e, p_e, J, M = terms.R_e, terms.p_e, terms.J, terms.M
    if frame is not None:
        pose = getattr(frame, "pose", frame)
        J = express_in_frame(J, pose.rotation)
    Jp = damped_pinv(J, damping)
    Lam = task_inertia(J, M, J_pinv=Jp)
    rows = slice(None) if task_rows is None else list(task_rows)
    return JacobianBundle(J=J, J_pinv=Jp, Lambda=Lam, w=manipulability(J[rows]),
                          M=M, ee=Transform(R_e, p_e))


def solve_ik(model: RobotModel, target: Transform, q0, damping: float = 1e-3, iters: int = 300,
             tol: float = 1e-7, rows=None, clamp: bool = True) -> tuple[np.ndarray, bool]:
    """Damped least-squares IK onto ``target``; ``rows`` restricts the matched task rows."""
    q = np.array(q0, dtype=float)
    rows = list(range(6)) if rows is None else list(rows)
    for _ in range(iters):
        chain = _chain(model, q)
        R_e, p_e = _ee_from_chain(model, *chain)
        err = np.concatenate([target.translation - p_e, orientation_error(target.rotation, R_e)])[rows]
        if np.max(np.abs(err)) < tol:
            return q, True
        J = point_jacobian(model, q, p_e, chain=chain)[rows]
        dq = J.T @ np.linalg.solve(J @ J.T + damping ** 2 * np.eye(len(rows)), err)
        step = np.max(np.abs(dq))
        if step > 0.2:
            dq *= 0.2 / step
        q = q + dq
        if clamp:
            q = np.clip(q, model.q_min + 1e-3, model.q_max - 1e-3)
    return q, False


# ----------------------------------------------------------------------------
# Reference models
# ----------------------------------------------------------------------------

def _rod_inertia(m: float, length: float, radius: float = 0.03) -> np.ndarray:
    # slender cylinder along local x
    ixx = 0.5 * m * radius ** 2
    iyy = m * (3 * radius ** 2 + length ** 2) / 12.0
    return np.diag([ixx, iyy, iyy])


def planar_arm(lengths, masses=None, q_min=None, q_max=None, tau_max=None, tool_length: float = 0.0,
               base: Transform | None = None, name: str = "planar") -> RobotModel:
    """Horizontal planar arm with joints about world z and links along local x.

    The tool offset (grasp point) sits ``tool_length`` beyond the last joint
    along the last link; the last entry of ``lengths`` is that link's length
    for inertia purposes when ``tool_length`` is zero.
    """
    lengths = np.asarray(lengths, dtype=float)
    k = len(lengths)
    masses = np.ones(k) if masses is None else np.asarray(masses, dtype=float)
    offsets = np.zeros((k, 3))
    offsets[1:, 0] = lengths[:-1]
    link_len = lengths.copy()
    if tool_length > 0.0:
        link_len[-1] = tool_length
    coms = np.zeros((k, 3))
    coms[:, 0] = 0.5 * link_len
    inertias = np.array([_rod_inertia(m, L) for m, L in zip(masses, link_len)])
    tool = Transform(np.eye(3), [tool_length if tool_length > 0.0 else lengths[-1], 0.0, 0.0])
    return RobotModel(
        name=name,
        joint_rotations=np.tile(np.eye(3), (k, 1, 1)),
        joint_offsets=offsets,
        joint_axes=np.tile([0.0, 0.0, 1.0], (k, 1)),
        link_masses=masses,
        link_coms=coms,
        link_inertias=inertias,
        q_min=np.full(k, -np.pi) if q_min is None else q_min,
        q_max=np.full(k, np.pi) if q_max is None else q_max,
        tau_max=np.full(k, 100.0) if tau_max is None else tau_max,
        tool=tool,
        base=base or Transform(),
        link_radius=0.03,
    )


# Franka-like modified DH table (a, d, alpha) and published joint limits.
_FR3_DH = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -np.pi / 2),
    (0.0, 0.316, np.pi / 2),
    (0.0825, 0.0, np.pi / 2),
    (-0.0825, 0.384, -np.pi / 2),
    (0.0, 0.0, np.pi / 2),
    (0.088, 0.0, np.pi / 2),
]
_FR3_Q_MIN = [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973]
_FR3_Q_MAX = [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973]
_FR3_TAU = [87.0, 87.0, 87.0, 87.0, 12.0, 12.0, 12.0]
_FR3_MASS = [4.97, 0.65, 3.23, 3.59, 1.23, 1.67, 1.47]
_FR3_COM = [
    (0.0035, -0.0353, -0.0713),
    (-0.0032, -0.0267, 0.0319),
    (0.0275, 0.0392, -0.0665),
    (-0.0532, 0.1044, 0.0275),
    (-0.0119, 0.0410, -0.0384),
    (0.0601, -0.0141, -0.0104),
    (0.0105, -0.0043, 0.0617),
]
_FR3_INERTIA_DIAG = [
    (0.70, 0.70, 0.0091),
    (0.0080, 0.028, 0.026),
    (0.037, 0.036, 0.011),
    (0.026, 0.020, 0.030),
    (0.036, 0.029, 0.0085),
    (0.0020, 0.0043, 0.0055),
    (0.012, 0.012, 0.0040),
]


def franka_like_arm(base: Transform | None = None, grasp_depth: float = 0.107 + 0.1034) -> RobotModel:
    """7-DOF reference arm with Franka-like geometry and joint limits.

    Inertial values are rounded approximations; they are a modelling choice.
    """
    rots, offs = [], []
    for a, d, alpha in _FR3_DH:
        R = rot_x(alpha)
        rots.append(R)
        offs.append(np.array([a, 0.0, 0.0]) + R @ np.array([0.0, 0.0, d]))
    return RobotModel(
        name="franka_like",
        joint_rotations=np.array(rots),
        joint_offsets=np.array(offs),
        joint_axes=np.tile([0.0, 0.0, 1.0], (7, 1)),
        link_masses=np.array(_FR3_MASS),
        link_coms=np.array(_FR3_COM),
        link_inertias=np.array([np.diag(d) for d in _FR3_INERTIA_DIAG]),
        q_min=np.array(_FR3_Q_MIN),
        q_max=np.array(_FR3_Q_MAX),
        tau_max=np.array(_FR3_TAU),
        tool=Transform(rot_z(-np.pi / 4), [0.0, 0.0, grasp_depth]),
        base=base or Transform(),
        link_radius=0.06,
    )
