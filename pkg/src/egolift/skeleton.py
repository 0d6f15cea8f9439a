"""Skeleton trees and forward-kinematic pose sampling.

Joints are topologically indexed: the root (the head, which carries the
camera rig) is index 0 and every other joint's parent has a smaller index.
Limb i connects non-root joint i to its parent, so a tree with ``n`` joints
has ``n - 1`` limbs.  Positions are in centimeters in the rig frame
(x right, y down, z forward; the root sits at the origin).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng


@dataclass(frozen=True)
class SkeletonTree:
    parents: np.ndarray       # int per joint; parents[0] == -1
    bone_lengths: np.ndarray  # cm per joint; entry 0 unused (root has no bone)
    rest_dirs: np.ndarray     # (n, 3) unit bone directions in the parent frame
    max_angles: np.ndarray    # radians; per-joint sampling range
    names: tuple = field(default=())

    def __post_init__(self):
        n = len(self.parents)
        if n < 2:
            raise ValueError(f"a skeleton needs at least 2 joints, got {n}")
        if self.parents[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for i in range(1, n):
            p = int(self.parents[i])
            if not 0 <= p < i:
                raise ValueError(
                    f"joint {i} has parent {p}; parents must satisfy parent(i) < i")
        if np.any(self.bone_lengths[1:] <= 0):
            raise ValueError("bone lengths must be positive")

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def n_limbs(self) -> int:
        return self.n_joints - 1

    @property
    def limbs(self):
        """(parent, child) pairs; limb i-1 belongs to child joint i."""
        return [(int(self.parents[i]), i) for i in range(1, self.n_joints)]

    def children(self, joint: int):
        return [i for i in range(1, self.n_joints) if self.parents[i] == joint]

    def to_dict(self) -> dict:
        return {
            "parents": [int(p) for p in self.parents],
            "bone_lengths": [float(x) for x in self.bone_lengths],
            "rest_dirs": [[float(v) for v in row] for row in self.rest_dirs],
            "max_angles": [float(a) for a in self.max_angles],
            "names": list(self.names),
        }

    @staticmethod
    def from_dict(d: dict) -> "SkeletonTree":
        return SkeletonTree(
            parents=np.asarray(d["parents"], dtype=np.int64),
            bone_lengths=np.asarray(d["bone_lengths"], dtype=np.float64),
            rest_dirs=np.asarray(d["rest_dirs"], dtype=np.float64),
            max_angles=np.asarray(d["max_angles"], dtype=np.float64),
            names=tuple(d.get("names", ())),
        )


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# name, parent, bone length (cm), rest direction (parent frame), max angle (deg)
_HUMANOID = [
    ("head",        -1,  0.0, (0, 1, 0),        10.0),
    ("neck",         0, 12.0, (0, 1, 0),        15.0),
    ("spine",        1, 45.0, (0, 1, 0),        25.0),
    ("l_upper_arm",  1, 28.0, (-1, 0, 0),      100.0),
    ("l_forearm",    3, 25.0, (-1, 0, 0),       70.0),
    ("l_hand",       4, 18.0, (-1, 0, 0),       45.0),
    ("r_upper_arm",  1, 28.0, (1, 0, 0),       100.0),
    ("r_forearm",    6, 25.0, (1, 0, 0),        70.0),
    ("r_hand",       7, 18.0, (1, 0, 0),        45.0),
    ("l_thigh",      2, 45.0, (-0.25, 1, 0),    45.0),
    ("l_calf",       9, 42.0, (0, 1, 0),        45.0),
    ("l_foot",      10, 20.0, (0, 0.35, 1),     30.0),
    ("r_thigh",      2, 45.0, (0.25, 1, 0),     45.0),
    ("r_calf",      12, 42.0, (0, 1, 0),        45.0),
    ("r_foot",      13, 20.0, (0, 0.35, 1),     30.0),
]


def build_skeleton(config: dict | None = None) -> SkeletonTree:
    """Build a skeleton tree.

    With no config, returns the default 15-joint humanoid (head/neck root,
    spine, two 3-joint arms, two 3-joint legs; T-pose rest layout).  A config
    dict gives explicit ``parents`` and ``bone_lengths`` plus optional
    ``rest_dirs``, ``max_angles`` (radians) and ``names``.
    """
    if config is None:
        names, parents, lengths, dirs, angles = zip(*[
            (n, p, l, _unit(d), np.deg2rad(a)) for n, p, l, d, a in _HUMANOID])
        return SkeletonTree(
            parents=np.asarray(parents, dtype=np.int64),
            bone_lengths=np.asarray(lengths, dtype=np.float64),
            rest_dirs=np.asarray(dirs, dtype=np.float64),
            max_angles=np.asarray(angles, dtype=np.float64),
            names=tuple(names),
        )
    parents = np.asarray(config["parents"], dtype=np.int64)
    n = len(parents)
    lengths = np.asarray(config.get("bone_lengths", [0.0] + [30.0] * (n - 1)), dtype=np.float64)
    dirs = config.get("rest_dirs")
    if dirs is None:
        dirs = np.tile([0.0, 1.0, 0.0], (n, 1))
    else:
        dirs = np.asarray(dirs, dtype=np.float64)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    angles = np.asarray(config.get("max_angles", np.full(n, np.deg2rad(40.0))), dtype=np.float64)
    return SkeletonTree(parents=parents, bone_lengths=lengths, rest_dirs=dirs,
                        max_angles=angles, names=tuple(config.get("names", ())))


def _axis_angle_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array([
        [t * x * x + c,      t * x * y - s * z,  t * x * z + s * y],
        [t * x * y + s * z,  t * y * y + c,      t * y * z - s * x],
        [t * x * z - s * y,  t * y * z + s * x,  t * z * z + c],
    ])


def sample_pose(tree: SkeletonTree, rng: Rng) -> np.ndarray:
    """Sample a pose by forward kinematics: each joint applies a random local
    rotation (random axis, angle uniform within its configured range) on top
    of its parent's accumulated rotation.  Bone lengths are preserved exactly;
    the root stays at the rig origin.  Returns (n_joints, 3) float64 cm.
    """
    n = tree.n_joints
    pos = np.zeros((n, 3), dtype=np.float64)
    rot = np.empty((n, 3, 3), dtype=np.float64)
    for i in range(n):
        axis = rng.normal(3)
        axis /= max(np.linalg.norm(axis), 1e-12)
        angle = float(rng.uniform(1, -tree.max_angles[i], tree.max_angles[i])[0])
        local = _axis_angle_rotation(axis, angle)
        if i == 0:
            rot[0] = local
            continue
        p = int(tree.parents[i])
        rot[i] = rot[p] @ local
        pos[i] = pos[p] + rot[i] @ (tree.bone_lengths[i] * tree.rest_dirs[i])
    return pos


def rest_pose(tree: SkeletonTree) -> np.ndarray:
    """Deterministic zero-rotation layout (T-pose for the humanoid)."""
    n = tree.n_joints
    pos = np.zeros((n, 3), dtype=np.float64)
    for i in range(1, n):
        p = int(tree.parents[i])
        pos[i] = pos[p] + tree.bone_lengths[i] * tree.rest_dirs[i]
    return pos
