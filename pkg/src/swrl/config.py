"""Scenario configuration: one JSON tree holding every constant of an experiment."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class RobotConfig(_Strict):
    kind: Literal["planar", "franka_like"] = "planar"
    lengths: list[float] = [0.45, 0.40, 0.12]
    masses: list[float] = [2.0, 1.5, 0.5]
    # None selects the model's built-in values (franka_like)
    q_min: Optional[list[float]] = [-2.9, 0.15, -2.0]
    q_max: Optional[list[float]] = [2.9, 2.2, 2.0]
    tau_max: Optional[list[float]] = [40.0, 30.0, 10.0]
    base_position: list[float] = [0.0, 0.0, 0.0]
    q_home: list[float] = [0.3, 1.6, -0.6]
    gravity: list[float] = [0.0, 0.0, -9.81]

    @field_validator("lengths", "masses")
    @classmethod
    def _positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("must be positive")
        return v


class ObstacleConfig(_Strict):
    primitive: Literal["halfspace", "box", "capsule"]
    position: list[float] = [0.0, 0.0, 0.0]
    rpy: list[float] = [0.0, 0.0, 0.0]
    dimensions: list[float] = []
    attached: bool = False


class ObjectConfig(_Strict):
    kind: Literal["valve", "lever_valve", "door", "drawer", "planar_valve"] = "planar_valve"
    joint_type: Literal["revolute", "prismatic"] = "revolute"
    origin: list[float] = [0.52, 0.22, 0.0]
    origin_rpy: list[float] = [0.0, 0.0, 0.0]
    axis: list[float] = [0.0, 0.0, 1.0]
    handle_offset: list[float] = [0.15, 0.0, 0.0]
    joint_range: tuple[float, float] = (0.0, 4 * np.pi)
    dry_friction: float = Field(1.5, ge=0)
    viscous_damping: float = Field(0.6, ge=0)
    spring_k: float = Field(0.0, ge=0)
    spring_rest: float = 0.0
    object_inertia: float = Field(0.03, gt=0)
    open_sense: Literal[-1, 1] = 1
    # grasp orientation as roll-pitch-yaw in the object frame; "base_radial"
    # points the tool along the base-to-handle direction (planar arms)
    grasp: Literal["rpy", "base_radial"] = "base_radial"
    grasp_rpy: list[float] = [0.0, 0.0, 0.0]
    obstacles: list[ObstacleConfig] = []


class RandomizationConfig(_Strict):
    position_jitter: list[float] = [0.03, 0.03, 0.0]
    handle_angle: tuple[float, float] = (-0.4, 0.4)
    axis_tilt: float = Field(0.0, ge=0)
    size_scale: tuple[float, float] = (0.85, 1.15)
    dry_friction: Optional[tuple[float, float]] = (0.8, 2.5)
    viscous_damping: Optional[tuple[float, float]] = (0.4, 0.8)
    spring_k: Optional[tuple[float, float]] = None
    object_inertia: Optional[tuple[float, float]] = (0.02, 0.04)

    @model_validator(mode="after")
    def _ordered(self):
        for name in ("handle_angle", "size_scale", "dry_friction", "viscous_damping", "spring_k", "object_inertia"):
            r = getattr(self, name)
            if r is not None and r[0] > r[1]:
                raise ValueError(f"{name}: lower bound exceeds upper bound")
        return self


class DecompositionConfig(_Strict):
    grasp_convention: Literal["rigid", "planar_free_yaw"] = "planar_free_yaw"
    overrides: Optional[dict[str, list[str]]] = None
    # rows the manipulability index is computed over; None means all six
    manipulability_rows: Optional[list[int]] = [0, 1, 5]


class ControllerConfig(_Strict):
    Kp: list[float] = [400.0, 400.0, 400.0, 100.0, 100.0, 100.0]
    Kd: Optional[list[float]] = None
    F_max: float = Field(60.0, gt=0)
    pinv_damping: float = Field(1e-2, gt=0)
    gravity_compensation: bool = True

    @field_validator("Kp")
    @classmethod
    def _six_positive(cls, v):
        if len(v) != 6 or any(x <= 0 for x in v):
            raise ValueError("needs six positive gains")
        return v


class WorldConfig(_Strict):
    grasp_stiffness: float = Field(20000.0, gt=0)
    grasp_damping: float = Field(150.0, ge=0)
    yaw_stiffness: float = Field(60.0, ge=0)
    yaw_damping: float = Field(1.5, ge=0)
    break_force: float = Field(80.0, gt=0)
    grasp_tolerance: float = Field(5e-3, gt=0)
    contact_stiffness: float = Field(2000.0, ge=0)
    stiction_band: float = Field(1e-4, gt=0)
    joint_damping: float = Field(0.0, ge=0)


class MDPConfig(_Strict):
    delta_f_set: list[float] = [0.1, 0.0, -0.1, 1.0]
    window: int = 10
    policy_hz: float = 100.0
    control_hz: float = 1000.0
    velocity_bands: dict[str, tuple[float, float]] = {
        "valve": (0.7, 0.8),
        "lever_valve": (0.7, 0.8),
        "planar_valve": (0.7, 0.8),
        "door": (0.1, 0.15),
        "drawer": (0.4, 0.5),
    }
    k1: float = 1.0
    k2: float = 0.1
    terminal_penalty: float = -100.0
    episode_time: float = Field(20.0, gt=0)
    a_max: float = Field(2.0, gt=0)
    velocity_smoothing: float = Field(0.5, gt=0, le=1)

    @model_validator(mode="after")
    def _rates(self):
        ratio = self.control_hz / self.policy_hz
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("control_hz must be an integer multiple of policy_hz")
        if len(self.delta_f_set) != 4:
            raise ValueError("delta_f_set needs four entries")
        return self


class LearnerConfig(_Strict):
    feature: Literal["flat", "lstm"] = "flat"
    d_feat: int = 128
    hidden: int = 128
    optimizer: Literal["adam", "sgd_momentum"] = "adam"
    lr: float = Field(1e-3, gt=0)
    momentum: float = 0.9
    batch_size: int = Field(128, gt=1)
    gamma: float = Field(0.98, gt=0, le=1)
    polyak: float = Field(0.005, gt=0, le=1)
    buffer_capacity: int = 60000
    offline_mixing: bool = True
    offline_episodes: int = 8
    warmup_steps: int = 500
    updates_every: int = 2
    episodes: int = 120
    epsilon_start: float = 0.5
    epsilon_end: float = 0.02
    epsilon_decay_episodes: int = 40
    init_alpha: float = 0.05
    target_entropy: Optional[float] = None
    reward_scale: float = 0.1
    huber_delta: float = 1.0
    grad_clip: float = 10.0
    bc_epochs: int = 30
    bc_lr: float = 1e-3
    bc_holdout: float = 0.1
    smoothing_window: int = 10


class ManualConfig(_Strict):
    force_step: float = Field(0.5, gt=0)    # N per policy tick
    joint_margin: float = Field(0.1, ge=0)  # rad


class EvalConfig(_Strict):
    cases: int = 120
    first_seed: int = 1000
    trace_points: int = 200


class ScenarioConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "planar_valve"
    seed: int = 0
    robot: RobotConfig = RobotConfig()
    object: ObjectConfig = ObjectConfig()
    randomization: RandomizationConfig = RandomizationConfig()
    decomposition: DecompositionConfig = DecompositionConfig()
    controller: ControllerConfig = ControllerConfig()
    world: WorldConfig = WorldConfig()
    mdp: MDPConfig = MDPConfig()
    learner: LearnerConfig = LearnerConfig()
    manual: ManualConfig = ManualConfig()
    eval: EvalConfig = EvalConfig()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @property
    def ticks_per_policy_step(self) -> int:
        return int(round(self.mdp.control_hz / self.mdp.policy_hz))

    def band(self) -> tuple[float, float]:
        return tuple(self.mdp.velocity_bands[self.object.kind])


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigurationError(_format_errors(err)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be an object")
    if "preset" in data:
        base = preset(data.pop("preset")).model_dump(mode="json")
        data = _merge(base, data)
    return parse_config(data)


def save_config(cfg: ScenarioConfig, path: str | Path):
    Path(path).write_text(cfg.to_json() + "\n")


def _merge(base: dict, update: dict) -> dict:
    out = dict(base)
    for key, val in update.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


# ----------------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------------

_FRANKA_HOME = [0.0, -0.3, 0.0, -2.2, 0.0, 2.0, 0.8]


def _franka_robot() -> dict:
    return {"kind": "franka_like", "lengths": [1.0], "masses": [1.0], "q_home": _FRANKA_HOME,
            "q_min": None, "q_max": None, "tau_max": None}


def _full_scale(d: dict) -> dict:
    d["decomposition"] = {"grasp_convention": "rigid", "overrides": None, "manipulability_rows": None}
    d["robot"] = _franka_robot()
    return d


PRESETS = {
    # reduced desk-scale world: 3-DOF planar arm turning a horizontal wheel by a knob
    "planar_valve": {"mdp": {"episode_time": 5.0}},
    "valve": _full_scale({
        "object": {
            "kind": "valve", "origin": [0.55, 0.0, 0.45], "origin_rpy": [0.0, -np.pi / 2, 0.0],
            "axis": [-1.0, 0.0, 0.0], "handle_offset": [0.15, 0.0, 0.0], "grasp": "rpy",
            "grasp_rpy": [np.pi, 0.0, 0.0], "dry_friction": 2.0, "object_inertia": 0.05,
        },
        "randomization": {"position_jitter": [0.04, 0.06, 0.04], "handle_angle": [-0.3, 0.3],
                          "axis_tilt": 0.15, "size_scale": [0.8, 1.2], "dry_friction": [1.0, 4.0],
                          "viscous_damping": [0.0, 0.2], "object_inertia": [0.03, 0.08]},
    }),
    "lever_valve": _full_scale({
        "object": {
            "kind": "lever_valve", "origin": [0.55, 0.1, 0.3], "origin_rpy": [0.0, 0.0, 0.0],
            "axis": [0.0, 0.0, 1.0], "handle_offset": [0.0, -0.2, 0.05], "grasp": "rpy",
            "grasp_rpy": [np.pi, 0.0, 0.0], "dry_friction": 2.0, "object_inertia": 0.04,
        },
        "randomization": {"position_jitter": [0.04, 0.06, 0.03], "handle_angle": [-0.3, 0.3],
                          "size_scale": [0.8, 1.2], "dry_friction": [1.0, 4.0],
                          "viscous_damping": [0.0, 0.2], "object_inertia": [0.03, 0.06]},
    }),
    "door": _full_scale({
        "object": {
            "kind": "door", "origin": [0.75, -0.45, 0.0], "origin_rpy": [0.0, 0.0, np.pi / 2],
            "axis": [0.0, 0.0, -1.0], "handle_offset": [0.55, 0.0, 0.55], "joint_range": [0.0, 1.5],
            "grasp": "rpy", "grasp_rpy": [np.pi / 2, 0.0, np.pi], "dry_friction": 1.0,
            "viscous_damping": 0.5, "object_inertia": 1.5,
            "obstacles": [{"primitive": "box", "position": [0.3, 0.0, 0.6], "rpy": [0, 0, 0],
                           "dimensions": [0.3, 0.02, 0.6], "attached": True}],
        },
        "randomization": {"position_jitter": [0.0, 0.0, 0.0], "handle_angle": [0.0, 0.0],
                          "size_scale": [1.0, 1.0], "dry_friction": [0.5, 3.0],
                          "viscous_damping": [0.2, 1.0], "object_inertia": [1.0, 2.0]},
        "mdp": {"episode_time": 15.0},
        "eval": {"cases": 10},
    }),
    "drawer": _full_scale({
        "object": {
            "kind": "drawer", "joint_type": "prismatic", "origin": [0.75, 0.0, 0.25],
            "origin_rpy": [0.0, -np.pi / 2, 0.0], "axis": [-1.0, 0.0, 0.0],
            "handle_offset": [0.0, 0.0, 0.0], "joint_range": [0.0, 0.6], "grasp": "rpy",
            "grasp_rpy": [np.pi, 0.0, 0.0], "dry_friction": 3.0, "viscous_damping": 2.0,
            "object_inertia": 2.0,
        },
        "randomization": {"position_jitter": [0.0, 0.0, 0.15], "handle_angle": [0.0, 0.0],
                          "size_scale": [1.0, 1.0], "dry_friction": [2.0, 6.0],
                          "viscous_damping": [1.0, 4.0], "object_inertia": [1.5, 3.0]},
        "eval": {"cases": 10},
    }),
}


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config(_merge({"name": name}, json.loads(json.dumps(PRESETS[name]))))
