"""Pinhole stereo rig for rendering synthetic egocentric views.

The rig frame has x right, y down, z forward with the root joint at the
origin.  The default rig evokes a glasses-mounted geometry: two cameras
8 cm apart, 2 cm below the origin, pitched downward toward the body.
Projection is in heatmap pixel units with pixel centers at integer
coordinates; the principal point is the image center ``(res-1)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PinholeCamera:
    position: np.ndarray   # (3,) rig frame, cm
    rotation: np.ndarray   # (3, 3): camera_coords = rotation @ (p - position)
    focal: float           # pixels
    cx: float
    cy: float
    resolution: int

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.position) @ self.rotation.T

    def project(self, points: np.ndarray):
        """Project (N, 3) rig-frame points.

        Returns (coords (N, 2) pixel units, depth (N,), in_front (N,) bool).
        Points at or behind the camera plane are flagged, not errors; their
        coordinates are not meaningful.
        """
        cam = self.to_camera(points)
        z = cam[:, 2]
        in_front = z > 1e-9
        safe_z = np.where(in_front, z, 1.0)
        u = self.focal * cam[:, 0] / safe_z + self.cx
        v = self.focal * cam[:, 1] / safe_z + self.cy
        return np.stack([u, v], axis=1), z, in_front

    def pixel_of(self, coord) -> tuple[int, int] | None:
        """Nearest pixel (col, row) of a continuous coordinate, or None if it
        falls outside the grid."""
        col = int(np.floor(coord[0] + 0.5))
        row = int(np.floor(coord[1] + 0.5))
        if 0 <= col < self.resolution and 0 <= row < self.resolution:
            return col, row
        return None


@dataclass(frozen=True)
class StereoCamera:
    left: PinholeCamera
    right: PinholeCamera

    def __post_init__(self):
        if self.baseline <= 0:
            raise ValueError("stereo baseline must be positive")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.left.position - self.right.position))

    @property
    def resolution(self) -> int:
        return self.left.resolution

    @property
    def views(self):
        return (self.left, self.right)


def default_rig(resolution: int = 64, fov_deg: float = 130.0, baseline: float = 8.0,
                drop: float = 2.0, pitch_deg: float = 55.0) -> StereoCamera:
    """Stereo rig ``baseline`` cm apart, ``drop`` cm below the rig origin,
    pitched ``pitch_deg`` downward from forward."""
    focal = resolution / (2.0 * np.tan(np.deg2rad(fov_deg) / 2.0))
    c = (resolution - 1) / 2.0
    pitch = np.deg2rad(pitch_deg)
    cp, sp = np.cos(pitch), np.sin(pitch)
    # camera axes in rig coords: x stays right, view axis tilts from forward
    # (z) toward down (y) by the pitch angle
    rot = np.array([
        [1.0, 0.0, 0.0],
        [0.0, cp, -sp],
        [0.0, sp, cp],
    ])
    cams = []
    for side in (-1.0, 1.0):
        pos = np.array([side * baseline / 2.0, drop, 0.0])
        cams.append(PinholeCamera(position=pos, rotation=rot, focal=float(focal),
                                  cx=c, cy=c, resolution=resolution))
    return StereoCamera(left=cams[0], right=cams[1])


def rig_to_dict(rig: StereoCamera) -> dict:
    def cam(c):
        return {
            "position": [float(x) for x in c.position],
            "rotation": [[float(x) for x in row] for row in c.rotation],
            "focal": c.focal, "cx": c.cx, "cy": c.cy, "resolution": c.resolution,
        }
    return {"left": cam(rig.left), "right": cam(rig.right)}


def rig_from_dict(d: dict) -> StereoCamera:
    def cam(c):
        return PinholeCamera(
            position=np.asarray(c["position"], dtype=np.float64),
            rotation=np.asarray(c["rotation"], dtype=np.float64),
            focal=float(c["focal"]), cx=float(c["cx"]), cy=float(c["cy"]),
            resolution=int(c["resolution"]))
    return StereoCamera(left=cam(d["left"]), right=cam(d["right"]))
