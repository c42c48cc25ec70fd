"""Object-oriented frame, three-way task-space decomposition and force direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .kinematics import TASK_LABELS, Transform
from .world import PRISMATIC, REVOLUTE, ObjectModel

INDEX = {name: i for i, name in enumerate(TASK_LABELS)}
MIN_HANDLE_RADIUS = 1e-3


@dataclass(frozen=True)
class ObjectFrame:
    """Frame at the object joint: z along the joint axis, x toward the handle."""

    pose: Transform

    @property
    def x_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 1]

    @property
    def z_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 2]

    def to_local(self, p_world: np.ndarray) -> np.ndarray:
        return self.pose.rotation.T @ (np.asarray(p_world) - self.pose.translation)

    def rotation_to_local(self, R_world: np.ndarray) -> np.ndarray:
        return self.pose.rotation.T @ R_world


def build_object_frame(obj: ObjectModel) -> ObjectFrame:
    z = obj.joint_axis / np.linalg.norm(obj.joint_axis)
    origin = obj.joint_origin.translation
    h = obj.joint_origin.rotation @ obj.handle_offset
    radial = h - (h @ z) * z
    r = np.linalg.norm(radial)
    if r < MIN_HANDLE_RADIUS:
        if obj.joint_type == REVOLUTE:
            raise ConfigurationError(
                f"handle radius {r:.2e} m is degenerate for a revolute object (needs >= 1 mm)")
        # prismatic with the handle on the axis: borrow the reference frame's x axis
        ref = obj.joint_origin.rotation[:, 0]
        radial = ref - (ref @ z) * z
        if np.linalg.norm(radial) < 1e-9:
            ref = obj.joint_origin.rotation[:, 1]
            radial = ref - (ref @ z) * z
        r = np.linalg.norm(radial)
    x = radial / r
    y = np.cross(z, x)
    return ObjectFrame(Transform(np.column_stack([x, y, z]), origin))


@dataclass(frozen=True)
class SubspaceDecomposition:
    S_K: tuple[int, ...]
    S_G: tuple[int, ...]
    S_R: tuple[int, ...]

    def __post_init__(self):
        sets = [set(self.S_K), set(self.S_G), set(self.S_R)]
        if any(i not in range(6) for s in sets for i in s):
            raise ConfigurationError("subspace indices must lie in 0..5")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigurationError(f"subspaces overlap: K={self.S_K} G={self.S_G} R={self.S_R}")
        if sets[0] | sets[1] | sets[2] != set(range(6)):
            raise ConfigurationError("subspaces must cover all six task coordinates")

    @property
    def S(self) -> np.ndarray:
        """Selection matrix: 1 on motion-controlled (geometric and redundant) rows."""
        d = np.zeros(6)
        d[list(self.S_G) + list(self.S_R)] = 1.0
        return np.diag(d)

    @property
    def n_redundant(self) -> int:
        return len(self.S_R)

    def labels(self) -> dict[str, list[str]]:
        return {name: [TASK_LABELS[i] for i in idx]
                for name, idx in (("S_K", self.S_K), ("S_G", self.S_G), ("S_R", self.S_R))}


def _indices(names) -> tuple[int, ...]:
    out = []
    for n in names:
        if isinstance(n, (int, np.integer)):
            out.append(int(n))
        elif n in INDEX:
            out.append(INDEX[n])
        else:
            raise ConfigurationError(f"unknown task coordinate {n!r}")
    return tuple(sorted(out))


# Geometric components held by the grasp, per object class. The kinematic
# subspace follows from the joint type; the rest is redundant.
_DEFAULT_GEOMETRIC = {
    "valve": ("z", "alpha"),
    "lever_valve": ("z", "alpha"),
    "door": ("z", "alpha"),
    "drawer": ("x", "y", "alpha"),
}
# Planar arms cannot act out of plane, so those rows are fixed by geometry;
# a knob that spins inside the gripper frees the yaw.
_CONVENTION_GEOMETRIC = {
    "planar_free_yaw": {REVOLUTE: ("z", "gamma", "beta"), PRISMATIC: ("x", "gamma", "beta")},
}


def decompose(obj: ObjectModel, grasp_convention: str = "rigid", overrides: dict | None = None) -> SubspaceDecomposition:
    """Partition the task space into kinematic, geometric and redundant subspaces."""
    if overrides:
        parts = {key: _indices(overrides.get(key, ())) for key in ("S_K", "S_G", "S_R")}
        given = [set(v) for v in parts.values()]
        if given[0] & given[1] or given[0] & given[2] or given[1] & given[2]:
            raise ConfigurationError(f"decomposition overrides overlap: {overrides}")
        if "S_R" not in overrides:
            parts["S_R"] = tuple(sorted(set(range(6)) - given[0] - given[1]))
        return SubspaceDecomposition(parts["S_K"], parts["S_G"], parts["S_R"])

    K = _indices(("x", "y") if obj.joint_type == REVOLUTE else ("z",))
    if grasp_convention == "rigid":
        G = _indices(_DEFAULT_GEOMETRIC.get(obj.kind, ("z", "alpha") if obj.joint_type == REVOLUTE
                                            else ("x", "y", "alpha")))
    elif grasp_convention in _CONVENTION_GEOMETRIC:
        G = _indices(_CONVENTION_GEOMETRIC[grasp_convention][obj.joint_type])
    else:
        raise ConfigurationError(f"unknown grasp convention {grasp_convention!r}")
    R = tuple(i for i in range(6) if i not in K and i not in G)
    return SubspaceDecomposition(K, G, R)


def force_direction(obj: ObjectModel, p_local: np.ndarray, sense: float | None = None) -> np.ndarray:
    """Unit force (rows x, y, z; zero moment rows) in the object frame.

    ``p_local`` is the grasp point in the object frame; for revolute joints
    the force is tangent to the circle through it.
    """
    sense = obj.open_sense if sense is None else sense
    out = np.zeros(6)
    if obj.joint_type == PRISMATIC:
        out[2] = np.sign(sense) if sense != 0 else 1.0
        return out
    r = np.array([p_local[0], p_local[1], 0.0])
    w = np.array([0.0, 0.0, np.sign(sense) if sense != 0 else 1.0])
    t = np.cross(w, r)
    n = np.linalg.norm(t)
    if n < 1e-12:
        raise ValueError("force direction undefined: grasp point lies on the joint axis")
    out[:3] = t / n
    return out
