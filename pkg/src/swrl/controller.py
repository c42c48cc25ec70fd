"""Hybrid force/motion control in the object frame and policy-command integration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SimulationFault
from .kinematics import JacobianBundle, R_to_rpy, rot_z, rpy_rates_to_omega, rpy_to_R, so3_log
from .subspace import SubspaceDecomposition
from .world import REVOLUTE, ObjectModel

F_MAX = 60.0
DT_POLICY = 0.01


@dataclass
class GainSet:
    Kp: np.ndarray = field(default_factory=lambda: np.array([400.0] * 3 + [100.0] * 3))
    Kd: np.ndarray | None = None

    def __post_init__(self):
        self.Kp = np.asarray(self.Kp, dtype=float)
        # critical damping heuristic
        self.Kd = 2.0 * np.sqrt(self.Kp) if self.Kd is None else np.asarray(self.Kd, dtype=float)
        if np.any(self.Kp <= 0) or np.any(self.Kd <= 0):
            raise ValueError("gains must be positive")


@dataclass
class HybridCommand:
    F: float
    force_dir: np.ndarray
    x_des: np.ndarray
    xd_des: np.ndarray
    timestamp: float = 0.0

    def force_vector(self) -> np.ndarray:
        return self.F * self.force_dir

    def check(self, decomp: SubspaceDecomposition, F_max: float = F_MAX, tol: float = 1e-12):
        if not 0.0 <= self.F <= F_max:
            raise ValueError(f"force magnitude {self.F} outside [0, {F_max}]")
        motion = list(decomp.S_G) + list(decomp.S_R)
        if np.any(np.abs(self.force_dir[motion]) > tol):
            raise ValueError("force direction has components on motion-controlled rows")


def compute_torque(bundle: JacobianBundle, S: np.ndarray, gains: GainSet, X_e: np.ndarray, V_e: np.ndarray,
                   F_d: np.ndarray, gravity_comp: np.ndarray, tau_max: np.ndarray | None = None) -> np.ndarray:
    """tau = J^T (Lambda S (Kp X_e + Kd V_e) + (I - S) F_d) + g, clamped to the torque limits."""
    for name, arr in (("X_e", X_e), ("V_e", V_e), ("F_d", F_d), ("gravity_comp", gravity_comp)):
        if not np.all(np.isfinite(arr)):
            raise SimulationFault(f"non-finite controller input {name}")
    s = np.diag(S) if np.ndim(S) == 2 else np.asarray(S)
    motion = bundle.Lambda @ (s * (gains.Kp * X_e + gains.Kd * V_e))
    force = (1.0 - s) * F_d
    tau = bundle.J.T @ (motion + force) + gravity_comp
    if not np.all(np.isfinite(tau)):
        raise SimulationFault("controller produced non-finite torque")
    if tau_max is not None:
        tau = np.clip(tau, -tau_max, tau_max)
    return tau


def pose_coordinates(p_local: np.ndarray, R_local: np.ndarray) -> np.ndarray:
    """[x, y, z, gamma, beta, alpha] of a pose expressed in the object frame."""
    return np.concatenate([p_local, R_to_rpy(R_local)])


def tracking_errors(x_des: np.ndarray, xd_des: np.ndarray, p_local: np.ndarray, R_local: np.ndarray,
                    twist_local: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pose and velocity errors in the object frame.

    The rotational pose error is the angle-axis vector of R_des R^T; desired
    roll-pitch-yaw rates are mapped to an angular velocity.
    """
    X_e = np.empty(6)
    X_e[:3] = x_des[:3] - p_local
    X_e[3:] = so3_log(rpy_to_R(*x_des[3:]) @ R_local.T)
    V_e = np.empty(6)
    V_e[:3] = xd_des[:3] - twist_local[:3]
    V_e[3:] = rpy_rates_to_omega(x_des[3:], xd_des[3:]) - twist_local[3:]
    return X_e, V_e


def integrate_policy_outputs(prev: HybridCommand, delta_F: float, xdd_R, planner_refs, decomp: SubspaceDecomposition,
                             dt_policy: float = DT_POLICY, F_max: float = F_MAX) -> HybridCommand:
    """Apply one policy tick: force increment on S_K, integrated acceleration on S_R, planner refs on S_G."""
    xdd_R = np.atleast_1d(np.asarray(xdd_R, dtype=float))
    R = list(decomp.S_R)
    if xdd_R.shape != (len(R),):
        raise ValueError(f"redundant action has dimension {xdd_R.shape[0]}, expected {len(R)}")
    x_G, xd_G = planner_refs
    x_des = prev.x_des.copy()
    xd_des = prev.xd_des.copy()
    if R:
        xd_des[R] = prev.xd_des[R] + xdd_R * dt_policy
        x_des[R] = prev.x_des[R] + xd_des[R] * dt_policy
    G = list(decomp.S_G)
    if G:
        x_des[G] = np.asarray(x_G)[G]
        xd_des[G] = np.asarray(xd_G)[G]
    F = float(np.clip(prev.F + delta_F, 0.0, F_max))
    return HybridCommand(F=F, force_dir=prev.force_dir.copy(), x_des=x_des, xd_des=xd_des,
                         timestamp=prev.timestamp + dt_policy)


def interpolate_command(prev: HybridCommand, new: HybridCommand, tick: int, n_ticks: int) -> HybridCommand:
    """Linear interpolation between consecutive policy commands; ``tick == n_ticks`` returns ``new``."""
    if tick >= n_ticks:
        return new
    a = tick / n_ticks
    return HybridCommand(
        F=prev.F + a * (new.F - prev.F),
        force_dir=new.force_dir,
        x_des=prev.x_des + a * (new.x_des - prev.x_des),
        xd_des=prev.xd_des + a * (new.xd_des - prev.xd_des),
        timestamp=prev.timestamp + a * (new.timestamp - prev.timestamp),
    )


def geometric_reference(obj: ObjectModel, theta: float, anchor: np.ndarray, theta0: float = 0.0,
                        theta_d: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Pose coordinates the grasp must follow as the object joint moves.

    ``anchor`` holds the grasp pose coordinates (object frame) at ``theta0``.
    Revolute joints carry the grasp around the z axis, so the yaw advances by
    the joint displacement; prismatic joints translate it along z.
    """
    anchor = np.asarray(anchor, dtype=float)
    d = theta - theta0
    x = anchor.copy()
    xd = np.zeros(6)
    if obj.joint_type == REVOLUTE:
        Rz = rot_z(d)
        x[:3] = Rz @ anchor[:3]
        x[5] = anchor[5] + d
        dRz = np.array([[-np.sin(d), -np.cos(d), 0.0], [np.cos(d), -np.sin(d), 0.0], [0.0, 0.0, 0.0]])
        xd[:3] = dRz @ anchor[:3] * theta_d
        xd[5] = theta_d
    else:
        x[2] = anchor[2] + d
        xd[2] = theta_d
    return x, xd


def with_force_direction(cmd: HybridCommand, force_dir: np.ndarray) -> HybridCommand:
    return replace(cmd, force_dir=np.asarray(force_dir, dtype=float))
