"""Two-policy MDP over the simulated arm/object world.

One environment step is one policy tick (100 Hz by default): the policy
outputs are integrated into a hybrid command, the controller runs for the
intervening control ticks, and the observation window advances by one frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ScenarioConfig
from .controller import (
    GainSet,
    HybridCommand,
    compute_torque,
    geometric_reference,
    integrate_policy_outputs,
    interpolate_command,
    pose_coordinates,
    tracking_errors,
)
from .errors import ConfigurationError, SimulationFault, UsageError
from .fastsim import DEGENERATE_FORCE, OK, run_ticks
from .kinematics import (
    RobotModel,
    Transform,
    _chain,
    _ee_from_chain,
    franka_like_arm,
    geometric_jacobian,
    planar_arm,
    rpy_to_R,
    solve_ik,
)
from .subspace import ObjectFrame, build_object_frame, decompose, force_direction
from .world import (
    REVOLUTE,
    ObjectModel,
    Obstacle,
    RandomizationRanges,
    VelocityEstimator,
    World,
    WorldParams,
    WorldState,
    randomize_scenario,
)

DELTA_F_SET = (0.1, 0.0, -0.1, 1.0)
WINDOW_LENGTH = 10
POLICY_HZ = 100.0
CONTROL_HZ = 1000.0
TERMINAL_PENALTY = -100.0
K1, K2 = 1.0, 0.1
VELOCITY_BANDS = {
    "valve": (0.7, 0.8),
    "lever_valve": (0.7, 0.8),
    "planar_valve": (0.7, 0.8),
    "door": (0.1, 0.15),
    "drawer": (0.4, 0.5),
}

JOINT_LIMIT = "joint_limit"
GRASP_LOSS = "grasp_loss"
TIMEOUT = "timeout"
CAUSES = ("", JOINT_LIMIT, GRASP_LOSS, TIMEOUT)


# ----------------------------------------------------------------------------
# Rewards and terminal conditions
# ----------------------------------------------------------------------------

def reward_K(velocity: float, object_class: str, bands=None) -> int:
    """1 inside the desired (angular) velocity band of the object class, else 0."""
    lo, hi = (bands or VELOCITY_BANDS)[object_class]
    return int(lo <= velocity <= hi)


def reward_R(delta_xdd, contacts=(), k1: float = K1, k2: float = K2) -> float:
    """1 - k1 |d xdd_R|_1 - k2 sum max(0, ln(-c_F)) over non-grasp contacts."""
    penalty = 0.0
    for c in contacts:
        c_F = c[1] if isinstance(c, tuple) else float(c)
        if -c_F > 1.0:
            penalty += np.log(-c_F)
    return float(1.0 - k1 * np.sum(np.abs(delta_xdd)) - k2 * penalty)


def check_terminal(state: WorldState, robot: RobotModel, episode_time: float,
                   penalty: float = TERMINAL_PENALTY) -> tuple[bool, str, float]:
    if np.any(state.q <= robot.q_min) or np.any(state.q >= robot.q_max):
        return True, JOINT_LIMIT, penalty
    if not state.grasp_attached:
        return True, GRASP_LOSS, penalty
    if state.sim_time >= episode_time - 1e-9:
        return True, TIMEOUT, 0.0
    return False, "", 0.0


# ----------------------------------------------------------------------------
# Observations and actions
# ----------------------------------------------------------------------------

@dataclass
class ObservationWindow:
    """Rolling history of observation frames, oldest first.

    Each frame is ``[q (k), tau (k), R (9, row-major), p (3), velocity]`` with
    the end-effector pose expressed in the object frame.
    """

    frames: np.ndarray
    valid: np.ndarray
    dof: int

    @classmethod
    def empty(cls, dof: int, length: int = WINDOW_LENGTH) -> "ObservationWindow":
        return cls(np.zeros((length, frame_size(dof))), np.zeros(length, dtype=bool), dof)

    def push(self, frame: np.ndarray) -> "ObservationWindow":
        frames = np.empty_like(self.frames)
        frames[:-1] = self.frames[1:]
        frames[-1] = frame
        valid = np.empty_like(self.valid)
        valid[:-1] = self.valid[1:]
        valid[-1] = True
        return ObservationWindow(frames, valid, self.dof)

    @property
    def warm(self) -> bool:
        return bool(self.valid.all())

    @property
    def latest(self) -> np.ndarray:
        return self.frames[-1]

    def q(self) -> np.ndarray:
        return self.latest[: self.dof]

    def tau(self) -> np.ndarray:
        return self.latest[self.dof: 2 * self.dof]

    def velocity(self) -> float:
        return float(self.latest[-1])

    def vector(self, scales: np.ndarray | None = None) -> np.ndarray:
        x = self.frames if scales is None else self.frames * scales
        return x.ravel()


def frame_size(dof: int) -> int:
    return 2 * dof + 13


@dataclass
class ActionPair:
    """Index into the force-increment set plus the redundant acceleration.

    ``delta_F`` replaces the set lookup with an explicit increment; only the
    scripted baseline uses it.
    """

    a_K: int
    a_R: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_F: float | None = None

    def __post_init__(self):
        self.a_K = int(self.a_K)
        self.a_R = np.atleast_1d(np.asarray(self.a_R, dtype=float))
        if self.a_K not in range(len(DELTA_F_SET)):
            raise ValueError(f"a_K must index the force-increment set, got {self.a_K}")

    def clamped(self, a_max: float) -> "ActionPair":
        return ActionPair(self.a_K, np.clip(self.a_R, -a_max, a_max), self.delta_F)

    def force_increment(self, delta_f_set=DELTA_F_SET) -> float:
        return float(self.delta_F) if self.delta_F is not None else float(delta_f_set[self.a_K])


@dataclass
class StepRecord:
    t: float
    theta: float
    theta_d: float
    velocity_estimate: float
    F: float
    r_K: float
    r_R: float
    w: float
    contact_sum: float
    q: np.ndarray
    a_K: int
    a_R: np.ndarray
    in_band: bool = False


@dataclass
class EpisodeLog:
    seed: int
    records: list = field(default_factory=list)
    cause: str = ""

    @property
    def terminal_theta(self) -> float:
        return self.records[-1].theta if self.records else 0.0

    @property
    def duration(self) -> float:
        return self.records[-1].t if self.records else 0.0

    def returns(self) -> tuple[float, float]:
        return (float(sum(r.r_K for r in self.records)), float(sum(r.r_R for r in self.records)))

    def occupancy(self) -> int:
        """Number of steps whose velocity estimate fell inside the band."""
        # r_K carries the terminal penalty on the last step, so the band flag is kept separately
        return int(sum(1 for r in self.records if r.in_band))

    def write_csv(self, path, header_lines=()):
        dof = len(self.records[0].q) if self.records else 0
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", *[f"q{i}" for i in range(dof)], "theta", "theta_d", "F", "c_F_sum", "w"])
            for r in self.records:
                w.writerow([f"{r.t:.3f}", *[repr(float(v)) for v in r.q], repr(r.theta), repr(r.theta_d),
                            repr(r.F), repr(r.contact_sum), repr(r.w)])


# ----------------------------------------------------------------------------
# Model construction from config
# ----------------------------------------------------------------------------

def build_robot(cfg: ScenarioConfig) -> RobotModel:
    rc = cfg.robot
    base = Transform(np.eye(3), rc.base_position)
    if rc.kind == "franka_like":
        model = franka_like_arm(base=base)
        if rc.q_min is not None:
            model.q_min = np.asarray(rc.q_min, dtype=float)
        if rc.q_max is not None:
            model.q_max = np.asarray(rc.q_max, dtype=float)
        if rc.tau_max is not None:
            model.tau_max = np.asarray(rc.tau_max, dtype=float)
    else:
        k = len(rc.lengths)
        if len(rc.masses) != k:
            raise ConfigurationError("robot.masses: length must match robot.lengths")
        for name in ("q_min", "q_max", "tau_max", "q_home"):
            v = getattr(rc, name)
            if v is not None and len(v) != k:
                raise ConfigurationError(f"robot.{name}: expected {k} entries")
        model = planar_arm(rc.lengths, rc.masses, q_min=rc.q_min, q_max=rc.q_max, tau_max=rc.tau_max,
                           base=base, name="planar")
    model.gravity = np.asarray(rc.gravity, dtype=float)
    if len(rc.q_home) != model.dof:
        raise ConfigurationError(f"robot.q_home: expected {model.dof} entries")
    return model


def build_object(cfg: ScenarioConfig) -> ObjectModel:
    oc = cfg.object
    axis = np.asarray(oc.axis, dtype=float)
    R0 = rpy_to_R(*oc.origin_rpy)
    obstacles = [Obstacle(o.primitive, Transform(rpy_to_R(*o.rpy), o.position), tuple(o.dimensions), attached=True)
                 for o in oc.obstacles if o.attached]
    return ObjectModel(
        kind=oc.kind, joint_type=oc.joint_type, joint_origin=Transform(R0, oc.origin),
        joint_axis=axis / np.linalg.norm(axis), handle_offset=np.asarray(oc.handle_offset, dtype=float),
        joint_range=tuple(oc.joint_range), dry_friction=oc.dry_friction, viscous_damping=oc.viscous_damping,
        spring_k=oc.spring_k, spring_rest=oc.spring_rest, object_inertia=oc.object_inertia,
        open_sense=float(oc.open_sense), attached_obstacles=obstacles,
    )


def static_obstacles(cfg: ScenarioConfig) -> list[Obstacle]:
    return [Obstacle(o.primitive, Transform(rpy_to_R(*o.rpy), o.position), tuple(o.dimensions))
            for o in cfg.object.obstacles if not o.attached]


def randomization_ranges(cfg: ScenarioConfig) -> RandomizationRanges:
    rc = cfg.randomization
    return RandomizationRanges(
        position_jitter=tuple(rc.position_jitter), handle_angle=tuple(rc.handle_angle), axis_tilt=rc.axis_tilt,
        size_scale=tuple(rc.size_scale), dry_friction=rc.dry_friction, viscous_damping=rc.viscous_damping,
        spring_k=rc.spring_k, object_inertia=rc.object_inertia,
    )


def world_params(cfg: ScenarioConfig) -> WorldParams:
    wc = cfg.world
    return WorldParams(
        dt=1.0 / cfg.mdp.control_hz, grasp_stiffness=wc.grasp_stiffness, grasp_damping=wc.grasp_damping,
        yaw_stiffness=wc.yaw_stiffness, yaw_damping=wc.yaw_damping,
        yaw_lock=cfg.decomposition.grasp_convention == "rigid", break_force=wc.break_force,
        grasp_tolerance=wc.grasp_tolerance, contact_stiffness=wc.contact_stiffness,
        stiction_band=wc.stiction_band, joint_damping=wc.joint_damping,
    )


# ----------------------------------------------------------------------------
# Environment
# ----------------------------------------------------------------------------

class ManipEnv:
    """Articulated-object manipulation MDP shared by the S_K and S_R policies."""

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None, randomize: bool = True,
                 fast: bool = True):
        self.cfg = cfg
        self.fast = fast
        self.robot = build_robot(cfg)
        self.base_object = build_object(cfg)
        self.randomize = randomize
        self.n_ticks = cfg.ticks_per_policy_step
        self.dt_policy = 1.0 / cfg.mdp.policy_hz
        self.gains = GainSet(cfg.controller.Kp, cfg.controller.Kd)
        self.band = cfg.band()
        self.delta_f_set = tuple(cfg.mdp.delta_f_set)
        self.decomp = decompose(self.base_object, cfg.decomposition.grasp_convention,
                                cfg.decomposition.overrides)
        self.S = self.decomp.S
        self.s_diag = np.diag(self.S).copy()
        self.w_rows = cfg.decomposition.manipulability_rows
        self._scales = self._frame_scales()
        self.done = True
        self.log: EpisodeLog | None = None
        self.reset(cfg.seed if seed is None else seed)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_redundant(self) -> int:
        return self.decomp.n_redundant

    @property
    def obs_dim(self) -> int:
        return self.cfg.mdp.window * frame_size(self.robot.dof)

    def _frame_scales(self) -> np.ndarray:
        k = self.robot.dof
        s = np.ones(frame_size(k))
        s[:k] = 1.0 / np.pi
        s[k:2 * k] = 1.0 / self.robot.tau_max
        s[2 * k + 9: 2 * k + 12] = 1.0 / 0.5
        s[-1] = 1.0 / max(self.band[1], 1e-6)
        return s

    def observe(self, window: ObservationWindow | None = None) -> np.ndarray:
        """Normalized flat observation vector fed to the learners."""
        return (window or self.window).vector(self._scales)

    # -- episode control -------------------------------------------------------
    def reset(self, seed: int | None = None) -> ObservationWindow:
        self.seed = int(self.cfg.seed if seed is None else seed)
        obj = (randomize_scenario(self.base_object, self.seed, randomization_ranges(self.cfg))
               if self.randomize else self.base_object)
        self.object = obj
        self.frame: ObjectFrame = build_object_frame(obj)
        self.world = World(self.robot, obj, static_obstacles(self.cfg), world_params(self.cfg),
                           frame_pose=self.frame.pose)
        q0, ok = self._grasp_configuration()
        self.ik_ok = ok
        self.state = self.world.initial_state(q0)
        self.estimator = VelocityEstimator(obj.joint_type, self.dt_policy, self.cfg.mdp.velocity_smoothing)
        p_local, R_local = self._ee_local(self.state.q)
        self.anchor = pose_coordinates(p_local, R_local)
        self.estimator.update(p_local)
        self.cmd = HybridCommand(F=0.0, force_dir=force_direction(obj, p_local), x_des=self.anchor.copy(),
                                 xd_des=np.zeros(6), timestamp=0.0)
        self.prev_a_R = np.zeros(self.n_redundant)
        self.window = ObservationWindow.empty(self.robot.dof, self.cfg.mdp.window).push(self._frame(p_local, R_local))
        self.done = False
        self.cause = ""
        self.log = EpisodeLog(seed=self.seed)
        self.last_w = self._manipulability(self.state.q)
        return self.window

    def _grasp_configuration(self) -> tuple[np.ndarray, bool]:
        obj = self.object
        handle = self.world.handle_point(0.0)[0]
        oc = self.cfg.object
        if oc.grasp == "base_radial":
            d = handle - self.robot.base.translation
            yaw_world = np.arctan2(d[1], d[0])
            R_world = self.frame.pose.rotation @ rpy_to_R(*oc.grasp_rpy[:2], 0.0)
            R_world = _yaw_about(self.frame.z_axis, yaw_world, R_world, self.frame)
        else:
            R_world = self.frame.pose.rotation @ rpy_to_R(*oc.grasp_rpy)
        target = Transform(R_world, handle)
        rows = self.w_rows if self.w_rows is not None else None
        q, ok = solve_ik(self.robot, target, self.cfg.robot.q_home, rows=rows)
        if not ok:
            q, ok = solve_ik(self.robot, target, self.cfg.robot.q_home, rows=rows, damping=1e-2, iters=2000)
        return q, ok

    def _ee_local(self, q) -> tuple[np.ndarray, np.ndarray]:
        R_e, p_e = _ee_from_chain(self.robot, *_chain(self.robot, q))
        return self.frame.to_local(p_e), self.frame.rotation_to_local(R_e)

    def _manipulability(self, q, terms=None) -> float:
        from .kinematics import express_in_frame, jacobian_world, manipulability
        J = terms.J if terms is not None else jacobian_world(self.robot, q)
        J = express_in_frame(J, self.frame.pose.rotation)
        return manipulability(J if self.w_rows is None else J[self.w_rows])

    def _frame(self, p_local, R_local) -> np.ndarray:
        s = self.state
        tau = s.tau if s.tau is not None else np.zeros(self.robot.dof)
        return np.concatenate([s.q, tau, R_local.ravel(), p_local, [self.estimator.value]])

    def _run_reference(self, new_cmd: HybridCommand) -> WorldState:
        obj, frame = self.object, self.frame
        Rf = frame.pose.rotation
        state = self.state
        for j in range(1, self.n_ticks + 1):
            c = interpolate_command(self.cmd, new_cmd, j, self.n_ticks)
            terms = self.world.terms(state)
            bundle = geometric_jacobian(self.robot, state.q, frame, self.cfg.controller.pinv_damping,
                                        self.w_rows, terms=terms)
            p_local = frame.to_local(terms.p_e)
            R_local = Rf.T @ terms.R_e
            twist = bundle.J @ state.qd
            X_e, V_e = tracking_errors(c.x_des, c.xd_des, p_local, R_local, twist)
            F_d = c.F * force_direction(obj, p_local)
            g = terms.g if self.cfg.controller.gravity_compensation else np.zeros(self.robot.dof)
            tau = compute_torque(bundle, self.s_diag, self.gains, X_e, V_e, F_d, g, self.robot.tau_max)
            state = self.world.step(state, tau, terms=terms)
            if not state.grasp_attached or np.any(state.q <= self.robot.q_min) or np.any(state.q >= self.robot.q_max):
                break
        return state

    def _run_compiled(self, new_cmd: HybridCommand) -> WorldState:
        r, o, wp, s = self.robot, self.object, self.world.params, self.state
        robot_arrays = (r.base.rotation, r.base.translation, r.joint_rotations, r.joint_offsets, r.joint_axes,
                        r.link_masses, r.link_coms, r.link_inertias)
        obj_params = (float(o.dry_friction), float(o.viscous_damping), float(o.spring_k), float(o.spring_rest),
                      float(o.object_inertia), float(o.joint_range[0]), float(o.joint_range[1]))
        world_params = (wp.dt, wp.grasp_stiffness, wp.grasp_damping, wp.yaw_stiffness, wp.yaw_damping,
                        1.0 if wp.yaw_lock else 0.0, wp.break_force, wp.grasp_tolerance, wp.stiction_band,
                        wp.joint_damping)
        out = run_ticks(self.n_ticks, robot_arrays, r.tool.rotation, r.tool.translation, r.gravity, r.tau_max,
                        r.q_min, r.q_max, self.frame.pose.rotation, self.frame.pose.translation,
                        self.world.handle_local, o.joint_type == REVOLUTE, obj_params, world_params,
                        self.s_diag, self.gains.Kp, self.gains.Kd, float(self.cfg.controller.pinv_damping),
                        bool(self.cfg.controller.gravity_compensation),
                        float(self.cmd.F), self.cmd.x_des, self.cmd.xd_des, float(new_cmd.F), new_cmd.x_des,
                        new_cmd.xd_des, float(o.open_sense),
                        s.q, s.qd, float(s.theta), float(s.theta_d), bool(s.grasp_attached), s.grasp_rel_rot,
                        int(s.ticks))
        q, qd, theta, theta_d, attached, ticks, tau, f, status = out
        if status == DEGENERATE_FORCE:
            raise ValueError("force direction undefined: grasp point lies on the joint axis")
        if status != OK:
            raise SimulationFault("simulation state became non-finite")
        return replace(s, q=q, qd=qd, theta=float(theta), theta_d=float(theta_d), grasp_attached=bool(attached),
                       ticks=int(ticks), tau=tau, grasp_force=f, last_contact_forces=[])

    def step(self, action: ActionPair):
        if self.done:
            raise UsageError("step() called on a finished episode; call reset() first")
        a = action.clamped(self.cfg.mdp.a_max)
        if a.a_R.shape != (self.n_redundant,):
            raise ValueError(f"a_R must have {self.n_redundant} entries")
        obj = self.object

        x_G, xd_G = geometric_reference(obj, self.estimator.position, self.anchor, 0.0, self.estimator.value)
        new_cmd = integrate_policy_outputs(self.cmd, a.force_increment(self.delta_f_set), a.a_R, (x_G, xd_G), self.decomp,
                                           self.dt_policy, self.cfg.controller.F_max)
        if self.fast and not self.world.obstacles:
            state = self._run_compiled(new_cmd)
        else:
            state = self._run_reference(new_cmd)
        self.state = state
        self.cmd = new_cmd

        p_local, R_local = self._ee_local(state.q)
        velocity = self.estimator.update(p_local)
        self.window = self.window.push(self._frame(p_local, R_local))
        signed_velocity = velocity * obj.open_sense
        in_band = reward_K(signed_velocity, obj.kind, self.cfg.mdp.velocity_bands)
        r_K = float(in_band)
        contacts = state.last_contact_forces
        r_R = reward_R(a.a_R - self.prev_a_R, [(c.location, c.force) for c in contacts],
                       self.cfg.mdp.k1, self.cfg.mdp.k2)
        self.prev_a_R = a.a_R.copy()
        done, cause, terminal = check_terminal(state, self.robot, self.cfg.mdp.episode_time,
                                               self.cfg.mdp.terminal_penalty)
        r_K += terminal
        r_R += terminal
        self.last_w = self._manipulability(state.q)
        rec = StepRecord(t=state.sim_time, theta=state.theta, theta_d=state.theta_d,
                         velocity_estimate=velocity, F=new_cmd.F, r_K=r_K, r_R=r_R, w=self.last_w,
                         contact_sum=float(sum(c.force for c in contacts)), q=state.q.copy(),
                         a_K=a.a_K, a_R=a.a_R.copy(), in_band=bool(in_band))
        self.log.records.append(rec)
        if done:
            self.done = True
            self.cause = cause
            self.log.cause = cause
        info = {"theta": state.theta, "theta_d": state.theta_d, "F": new_cmd.F, "w": self.last_w,
                "cause": cause, "t": state.sim_time, "in_band": int(in_band),
                "terminal_reward": terminal}
        return self.window, r_K, r_R, done, info


def _yaw_about(z: np.ndarray, yaw_world: float, R_world: np.ndarray, frame: ObjectFrame) -> np.ndarray:
    """Rotate ``R_world`` about the object z axis so its x axis has world heading ``yaw_world``."""
    from .kinematics import axis_angle_to_R
    x = R_world[:, 0]
    current = np.arctan2(x[1], x[0])
    return axis_angle_to_R(z, yaw_world - current) @ R_world
