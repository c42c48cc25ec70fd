"""Fixed-step physics of an arm grasping a single-joint articulated object."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import SimulationFault
from .kinematics import (
    RobotModel,
    RobotTerms,
    Transform,
    _chain,
    axis_angle_to_R,
    _ee_from_chain,
    kinetic_energy,
    orientation_error,
    point_jacobian,
    potential_energy,
    robot_terms,
    rot_z,
)

DT_SIM = 1e-3
REVOLUTE = "revolute"
PRISMATIC = "prismatic"


@dataclass
class ObjectModel:
    """Single-joint articulated object.

    ``joint_origin`` places a reference frame at the joint; ``handle_offset``
    is the handle position in that frame at joint value zero. ``open_sense``
    is the commanded direction of motion along the joint axis (+1 or -1).
    """

    kind: str
    joint_type: str
    joint_origin: Transform
    joint_axis: np.ndarray
    handle_offset: np.ndarray
    joint_range: tuple[float, float] = (0.0, 4 * np.pi)
    dry_friction: float = 1.0
    viscous_damping: float = 0.0
    spring_k: float = 0.0
    spring_rest: float = 0.0
    object_inertia: float = 0.05
    open_sense: float = 1.0
    attached_obstacles: list = field(default_factory=list)

    def __post_init__(self):
        self.joint_axis = np.asarray(self.joint_axis, dtype=float)
        self.handle_offset = np.asarray(self.handle_offset, dtype=float)
        if self.joint_type not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint type {self.joint_type!r}")
        if abs(np.linalg.norm(self.joint_axis) - 1.0) > 1e-9:
            raise ValueError("joint_axis must be a unit vector")
        for name in ("dry_friction", "viscous_damping", "spring_k", "object_inertia"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.object_inertia <= 0:
            raise ValueError("object_inertia must be positive")


@dataclass
class Obstacle:
    primitive: str  # "halfspace" | "box" | "capsule"
    pose: Transform
    dimensions: tuple = ()
    attached: bool = False  # moves with the object joint, pose given in the object frame

    def __post_init__(self):
        if self.primitive not in ("halfspace", "box", "capsule"):
            raise ValueError(f"unknown obstacle primitive {self.primitive!r}")
        if any(d <= 0 for d in self.dimensions):
            raise ValueError("obstacle dimensions must be positive")

    def signed_distance(self, p: np.ndarray, pose: Transform | None = None) -> float:
        pose = pose or self.pose
        local = pose.rotation.T @ (p - pose.translation)
        if self.primitive == "halfspace":
            return float(local[2])
        if self.primitive == "box":
            d = np.abs(local) - np.asarray(self.dimensions)
            return float(np.linalg.norm(np.maximum(d, 0.0)) + min(np.max(d), 0.0))
        radius, half = self.dimensions
        z = np.clip(local[2], -half, half)
        return float(np.linalg.norm(local - np.array([0.0, 0.0, z])) - radius)


class Contact(NamedTuple):
    location: np.ndarray
    force: float  # c_F, negative under compression
    normal: np.ndarray
    link: int


@dataclass
class WorldParams:
    dt: float = DT_SIM
    grasp_stiffness: float = 20000.0
    grasp_damping: float = 150.0
    yaw_stiffness: float = 60.0
    yaw_damping: float = 1.5
    yaw_lock: bool = True
    break_force: float = 80.0
    grasp_tolerance: float = 5e-3
    contact_stiffness: float = 2000.0
    contact_damping: float = 0.0
    stiction_band: float = 1e-4
    joint_damping: float = 0.0
    capsule_samples: int = 6


@dataclass
class WorldState:
    q: np.ndarray
    qd: np.ndarray
    theta: float
    theta_d: float
    grasp_attached: bool
    ticks: int = 0
    dt: float = DT_SIM
    tau: np.ndarray | None = None
    grasp_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grasp_rel_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    last_contact_forces: list = field(default_factory=list)

    @property
    def sim_time(self) -> float:
        return self.ticks * self.dt


def object_motion(obj: ObjectModel, theta: float, frame_pose: Transform) -> Transform:
    """Rigid motion (world) applied to the moving part at joint value ``theta``.

    Maps points given in the object frame ``frame_pose`` at joint value zero to
    the world at ``theta``.
    """
    if obj.joint_type == REVOLUTE:
        return frame_pose @ Transform(rot_z(theta), np.zeros(3))
    return frame_pose @ Transform(np.eye(3), [0.0, 0.0, theta])


class World:
    """Arm + object + obstacles advanced with semi-implicit Euler at ``dt``."""

    def __init__(self, robot: RobotModel, obj: ObjectModel, obstacles=(), params: WorldParams | None = None,
                 frame_pose: Transform | None = None):
        from .subspace import build_object_frame

        self.robot = robot
        self.obj = obj
        self.obstacles = list(obstacles) + list(obj.attached_obstacles)
        self.params = params or WorldParams()
        self.frame = build_object_frame(obj) if frame_pose is None else None
        self.frame_pose = self.frame.pose if frame_pose is None else frame_pose
        # handle position in the object frame
        self.handle_local = self.frame_pose.inverse().apply(obj.joint_origin.apply(obj.handle_offset))

    # -- object kinematics ---------------------------------------------------
    def handle_point(self, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """World handle position and its derivative with respect to theta."""
        R0, o = self.frame_pose.rotation, self.frame_pose.translation
        h = self.handle_local
        if self.obj.joint_type == REVOLUTE:
            c, s = np.cos(theta), np.sin(theta)
            local = np.array([c * h[0] - s * h[1], s * h[0] + c * h[1], h[2]])
            dlocal = np.array([-s * h[0] - c * h[1], c * h[0] - s * h[1], 0.0])
        else:
            local = h + np.array([0.0, 0.0, theta])
            dlocal = np.array([0.0, 0.0, 1.0])
        return o + R0 @ local, R0 @ dlocal

    def handle_rotation(self, theta: float) -> np.ndarray:
        if self.obj.joint_type == REVOLUTE:
            return self.frame_pose.rotation @ rot_z(theta)
        return self.frame_pose.rotation

    # -- state construction --------------------------------------------------
    def initial_state(self, q0, theta0: float = 0.0, attached: bool = True) -> WorldState:
        q0 = self.robot.check_q(q0).copy()
        R_e = _ee_from_chain(self.robot, *_chain(self.robot, q0))[0]
        rel = self.handle_rotation(theta0).T @ R_e
        return WorldState(q=q0, qd=np.zeros_like(q0), theta=float(theta0), theta_d=0.0,
                          grasp_attached=attached, ticks=0, dt=self.params.dt,
                          tau=np.zeros_like(q0), grasp_rel_rot=rel)

    def terms(self, state: WorldState) -> RobotTerms:
        return robot_terms(self.robot, state.q, state.qd)

    # -- contacts ------------------------------------------------------------
    def link_segments(self, chain, p_e) -> list[tuple[np.ndarray, np.ndarray]]:
        _, ps = chain
        pts = list(ps) + [p_e]
        return [(pts[i], pts[i + 1]) for i in range(self.robot.dof)]

    def _obstacle_pose(self, obs: Obstacle, theta: float) -> Transform:
        if obs.attached:
            return object_motion(self.obj, theta, self.frame_pose) @ obs.pose
        return obs.pose

    def contacts(self, chain, p_e, theta: float) -> list[Contact]:
        if not self.obstacles:
            return []
        n = self.params.capsule_samples
        r = self.robot.link_radius
        k_c = self.params.contact_stiffness
        out = []
        for link, (a, b) in enumerate(self.link_segments(chain, p_e)):
            ts = np.linspace(0.0, 1.0, n)
            pts = a[None, :] + ts[:, None] * (b - a)[None, :]
            for obs in self.obstacles:
                pose = self._obstacle_pose(obs, theta)
                d = np.array([obs.signed_distance(p, pose) for p in pts]) - r
                i = int(np.argmin(d))
                if d[i] < 0.0:
                    p = pts[i]
                    eps = 1e-6
                    grad = np.array([(obs.signed_distance(p + eps * e, pose)
                                      - obs.signed_distance(p - eps * e, pose)) / (2 * eps)
                                     for e in np.eye(3)])
                    nrm = np.linalg.norm(grad)
                    normal = grad / nrm if nrm > 0 else np.array([0.0, 0.0, 1.0])
                    out.append(Contact(p.copy(), -k_c * (-d[i]), normal, link))
        return out

    # -- dynamics ------------------------------------------------------------
    def object_acceleration(self, theta: float, theta_d: float, generalized_force: float) -> tuple[float, bool]:
        """Joint acceleration and whether stiction holds the joint this tick."""
        o = self.obj
        drive = generalized_force - o.viscous_damping * theta_d - o.spring_k * (theta - o.spring_rest)
        if abs(theta_d) < self.params.stiction_band:
            if abs(drive) <= o.dry_friction:
                return 0.0, True
            return (drive - np.sign(drive) * o.dry_friction) / o.object_inertia, False
        return (drive - np.sign(theta_d) * o.dry_friction) / o.object_inertia, False

    def step(self, state: WorldState, joint_torques, dt: float | None = None,
             terms: RobotTerms | None = None) -> WorldState:
        """Advance one tick; ``dt`` must equal the simulator step."""
        p = self.params
        if dt is not None and abs(dt - p.dt) > 1e-15:
            raise ValueError(f"dt must be {p.dt}, got {dt}")
        tau = np.asarray(joint_torques, dtype=float)
        if tau.shape != state.q.shape or not np.all(np.isfinite(tau)):
            raise SimulationFault("non-finite or misshaped torque input")
        tau = np.clip(tau, -self.robot.tau_max, self.robot.tau_max)
        t = terms if terms is not None else self.terms(state)
        h_pt, dh_pt = self.handle_point(state.theta)
        Jv, Jw = t.J[:3], t.J[3:]

        ext = np.zeros(self.robot.dof)
        obj_force = 0.0
        f = np.zeros(3)
        if state.grasp_attached:
            v_e = Jv @ state.qd
            f = p.grasp_stiffness * (h_pt - t.p_e) + p.grasp_damping * (dh_pt * state.theta_d - v_e)
            ext += Jv.T @ f
            obj_force -= dh_pt @ f
            if p.yaw_lock:
                z = self.frame_pose.rotation[:, 2]
                target = self.handle_rotation(state.theta) @ state.grasp_rel_rot
                err = orientation_error(target, t.R_e) @ z
                w_handle = state.theta_d if self.obj.joint_type == REVOLUTE else 0.0
                rate = w_handle - z @ (Jw @ state.qd)
                n = (p.yaw_stiffness * err + p.yaw_damping * rate) * z
                ext += Jw.T @ n
                if self.obj.joint_type == REVOLUTE:
                    obj_force -= z @ n

        contacts = self.contacts(t.chain, t.p_e, state.theta)
        for c in contacts:
            Jc = point_jacobian(self.robot, state.q, c.location, link=c.link, chain=t.chain)
            ext += Jc[:3].T @ (-c.force * c.normal)

        qdd = np.linalg.solve(t.M, tau - t.h + ext - p.joint_damping * state.qd)
        qd = state.qd + p.dt * qdd
        q = state.q + p.dt * qd

        tdd, stuck = self.object_acceleration(state.theta, state.theta_d, obj_force)
        if stuck:
            theta_d = 0.0
        else:
            theta_d = state.theta_d + p.dt * tdd
            if state.theta_d != 0.0 and np.sign(theta_d) != np.sign(state.theta_d) and self.obj.dry_friction > 0:
                # friction cannot reverse the motion within one tick
                theta_d = 0.0
        theta = state.theta + p.dt * theta_d
        lo, hi = self.obj.joint_range
        if theta < lo or theta > hi:
            theta = float(np.clip(theta, lo, hi))
            theta_d = 0.0

        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd)) and np.isfinite(theta)):
            raise SimulationFault("simulation state became non-finite")

        attached = state.grasp_attached
        if attached:
            R_e, p_e = _ee_from_chain(self.robot, *_chain(self.robot, q))
            sep = np.linalg.norm(self.handle_point(theta)[0] - p_e)
            if np.linalg.norm(f) > p.break_force or sep > p.grasp_tolerance:
                attached = False

        return replace(state, q=q, qd=qd, theta=float(theta), theta_d=float(theta_d),
                       grasp_attached=attached, ticks=state.ticks + 1, tau=tau,
                       grasp_force=f, last_contact_forces=contacts)

    # -- diagnostics ---------------------------------------------------------
    def grasp_residual(self, state: WorldState) -> float:
        p_e = _ee_from_chain(self.robot, *_chain(self.robot, state.q))[1]
        return float(np.linalg.norm(self.handle_point(state.theta)[0] - p_e))

    def energy(self, state: WorldState) -> float:
        """Total mechanical energy of arm, object and grasp springs."""
        p = self.params
        o = self.obj
        E = kinetic_energy(self.robot, state.q, state.qd) + potential_energy(self.robot, state.q)
        E += 0.5 * o.object_inertia * state.theta_d ** 2 + 0.5 * o.spring_k * (state.theta - o.spring_rest) ** 2
        if state.grasp_attached:
            R_e, p_e = _ee_from_chain(self.robot, *_chain(self.robot, state.q))
            d = self.handle_point(state.theta)[0] - p_e
            E += 0.5 * p.grasp_stiffness * d @ d
            if p.yaw_lock:
                z = self.frame_pose.rotation[:, 2]
                err = orientation_error(self.handle_rotation(state.theta) @ state.grasp_rel_rot, R_e) @ z
                E += 0.5 * p.yaw_stiffness * err ** 2
        return float(E)


def contact_query(world: World, state: WorldState, obstacles=None) -> list[Contact]:
    """Penalty contacts between arm-link capsules and obstacles (grasp excluded)."""
    chain = _chain(world.robot, state.q)
    p_e = _ee_from_chain(world.robot, *chain)[1]
    if obstacles is not None:
        saved = world.obstacles
        world.obstacles = list(obstacles)
        try:
            return world.contacts(chain, p_e, state.theta)
        finally:
            world.obstacles = saved
    return world.contacts(chain, p_e, state.theta)


# ----------------------------------------------------------------------------
# Velocity estimation
# ----------------------------------------------------------------------------

class VelocityEstimator:
    """Object joint velocity from end-effector positions expressed in the object frame.

    Revolute joints use the unwrapped polar angle of the point's projection
    on the frame's x-y plane; prismatic joints use the z coordinate. The raw
    finite difference is smoothed with a first-order low-pass filter.
    """

    def __init__(self, joint_type: str, dt: float, smoothing: float = 0.5):
        self.joint_type = joint_type
        self.dt = dt
        self.smoothing = smoothing
        self.reset()

    def reset(self):
        self.prev = None
        self.position = 0.0
        self.offset = None
        self.value = 0.0
        self.samples = 0

    def coordinate(self, p_local: np.ndarray) -> float:
        if self.joint_type == REVOLUTE:
            return float(np.arctan2(p_local[1], p_local[0]))
        return float(p_local[2])

    def update(self, p_local: np.ndarray) -> float:
        c = self.coordinate(p_local)
        self.samples += 1
        if self.prev is None:
            self.prev = c
            self.offset = c
            self.position = 0.0
            return self.value
        d = c - self.prev
        if self.joint_type == REVOLUTE:
            d = (d + np.pi) % (2 * np.pi) - np.pi
        self.prev = c
        self.position += d
        raw = d / self.dt
        if self.samples == 2:
            self.value = raw
        else:
            self.value += self.smoothing * (raw - self.value)
        return self.value

    @property
    def cold(self) -> bool:
        return self.samples < 2


def estimate_object_velocity(history, dt: float, joint_type: str = REVOLUTE,
                             smoothing: float = 0.5) -> tuple[float, bool]:
    """Filtered joint velocity from a sequence of positions in the object frame.

    Returns ``(estimate, cold)``; ``cold`` is true (and the estimate zero) for
    fewer than two samples.
    """
    est = VelocityEstimator(joint_type, dt, smoothing)
    for p in history:
        est.update(np.asarray(p, dtype=float))
    if est.cold:
        return 0.0, True
    return est.value, False


# ----------------------------------------------------------------------------
# Scenario randomization
# ----------------------------------------------------------------------------

@dataclass
class RandomizationRanges:
    position_jitter: tuple[float, float, float] = (0.0, 0.0, 0.0)
    handle_angle: tuple[float, float] = (0.0, 0.0)   # rotation of the handle about the joint axis
    axis_tilt: float = 0.0                            # max tilt of the joint axis (rad)
    size_scale: tuple[float, float] = (1.0, 1.0)     # scales the handle radius / offset
    dry_friction: tuple[float, float] | None = None
    viscous_damping: tuple[float, float] | None = None
    spring_k: tuple[float, float] | None = None
    object_inertia: tuple[float, float] | None = None


def randomize_scenario(base: ObjectModel, seed: int, ranges: RandomizationRanges | None = None) -> ObjectModel:
    """Deterministic-in-seed sample of object pose, size and joint dynamics."""
    ranges = ranges or RandomizationRanges()
    rng = np.random.default_rng([int(seed), 0x5EED])
    jitter = np.asarray(ranges.position_jitter, dtype=float)
    dp = rng.uniform(-jitter, jitter)
    phi = rng.uniform(*ranges.handle_angle)
    tilt_dir = rng.uniform(0.0, 2 * np.pi)
    tilt = rng.uniform(0.0, ranges.axis_tilt) if ranges.axis_tilt > 0 else 0.0
    scale = rng.uniform(*ranges.size_scale)

    def sample(rng_range, current):
        if rng_range is None:
            return current
        lo, hi = rng_range
        return float(np.clip(rng.uniform(lo, hi), lo, hi))

    R0 = base.joint_origin.rotation
    tilt_axis = R0 @ np.array([np.cos(tilt_dir), np.sin(tilt_dir), 0.0])
    R_tilt = axis_angle_to_R(tilt_axis, tilt)
    axis = R_tilt @ base.joint_axis
    axis /= np.linalg.norm(axis)
    R_new = R_tilt @ R0 @ rot_z(phi)
    origin = Transform(R_new, base.joint_origin.translation + dp)
    return replace(
        base,
        joint_origin=origin,
        joint_axis=axis,
        handle_offset=base.handle_offset * np.array([scale, scale, 1.0]),
        dry_friction=sample(ranges.dry_friction, base.dry_friction),
        viscous_damping=sample(ranges.viscous_damping, base.viscous_damping),
        spring_k=sample(ranges.spring_k, base.spring_k),
        object_inertia=sample(ranges.object_inertia, base.object_inertia),
    )
