"""Joint and limb heatmap rendering, occlusion, and sample generation.

Heatmap stacking follows the stereo-interleaved convention: for joint (or
limb) i, entries 2i and 2i+1 (0-based) are the left and right views.  Joint
heatmaps are unnormalized Gaussians with values in [0, 1]; limb heatmaps
carry two channels in [-1, 1] painting (sin, cos) of the limb's elevation
out of the camera image plane on a band around the projected 2D segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import StereoCamera
from .rng import Rng
from .skeleton import SkeletonTree, sample_pose


@dataclass
class StereoHeatmapSet:
    """Per-sample stereo heatmaps: joints (2*N_J, r, r), limbs (2*N_L, 2, r, r)."""
    joints: np.ndarray
    limbs: np.ndarray

    @property
    def resolution(self) -> int:
        return self.joints.shape[-1]


@dataclass(frozen=True)
class OcclusionPolicy:
    """Per-joint, per-view occlusion.

    Each non-root joint is independently occluded in each view with
    probability ``rate`` (scaled by ``(depth/mean_depth)**depth_gamma`` when
    depths are supplied, so farther joints are likelier occluded).  An
    occluded joint's heatmap is zeroed in that view; its incident limbs'
    heatmaps are multiplied by ``limb_factor`` in that view.
    """
    rate: float = 0.0
    depth_gamma: float = 0.0
    limb_factor: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"occlusion rate must be in [0, 1], got {self.rate}")

    def to_dict(self) -> dict:
        return {"rate": self.rate, "depth_gamma": self.depth_gamma,
                "limb_factor": self.limb_factor}

    @staticmethod
    def from_dict(d: dict) -> "OcclusionPolicy":
        return OcclusionPolicy(**d)


def render_joint_heatmap(coord, in_front: bool, sigma: float, resolution: int) -> np.ndarray:
    """Gaussian heatmap around the nearest pixel center to ``coord``.

    The center is snapped to the nearest pixel, making the peak exactly 1.0
    there.  Out-of-view joints (behind the camera, or whose nearest pixel
    falls outside the grid) give an all-zero map: a clean no-information
    signal rather than a truncated tail.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    out = np.zeros((resolution, resolution), dtype=np.float32)
    if not in_front:
        return out
    col = int(np.floor(coord[0] + 0.5))
    row = int(np.floor(coord[1] + 0.5))
    if not (0 <= col < resolution and 0 <= row < resolution):
        return out
    ax = np.arange(resolution, dtype=np.float64)
    gx = np.exp(-((ax - col) ** 2) / (2.0 * sigma * sigma))
    gy = np.exp(-((ax - row) ** 2) / (2.0 * sigma * sigma))
    return np.outer(gy, gx).astype(np.float32)


def _segment_distance(px, py, a, b) -> np.ndarray:
    """Distance from grid points to segment [a, b]; handles the degenerate
    point segment."""
    ab = b - a
    den = float(ab @ ab)
    dx = px - a[0]
    dy = py - a[1]
    if den < 1e-18:
        return np.hypot(dx, dy)
    t = np.clip((dx * ab[0] + dy * ab[1]) / den, 0.0, 1.0)
    return np.hypot(dx - t * ab[0], dy - t * ab[1])


def render_limb_heatmap(parent_coord, child_coord, parent_in_front: bool,
                        child_in_front: bool, limb_dir_cam, width: float,
                        resolution: int) -> np.ndarray:
    """Two-channel limb map: (sin, cos) of the limb's out-of-plane elevation
    painted on pixels within ``width`` of the projected segment.

    If either endpoint is behind the camera the projection of the segment is
    unreliable and the map is all-zero; the same holds when both endpoints'
    nearest pixels fall outside the grid.  A single endpoint outside the grid
    still draws (the band is clipped by the image bounds).
    """
    out = np.zeros((2, resolution, resolution), dtype=np.float32)
    if not (parent_in_front and child_in_front):
        return out

    def on_grid(c):
        col = int(np.floor(c[0] + 0.5))
        row = int(np.floor(c[1] + 0.5))
        return 0 <= col < resolution and 0 <= row < resolution

    if not (on_grid(parent_coord) or on_grid(child_coord)):
        return out
    d = np.asarray(limb_dir_cam, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        return out
    sin_t = d[2] / norm
    cos_t = np.hypot(d[0], d[1]) / norm
    ax = np.arange(resolution, dtype=np.float64)
    px, py = np.meshgrid(ax, ax)  # px: column/x, py: row/y
    dist = _segment_distance(px, py, np.asarray(parent_coord, dtype=np.float64),
                             np.asarray(child_coord, dtype=np.float64))
    band = dist <= width
    out[0][band] = sin_t
    out[1][band] = cos_t
    return out


def occlude(hmaps: StereoHeatmapSet, tree: SkeletonTree, policy: OcclusionPolicy,
            rng: Rng, depths: np.ndarray | None = None) -> StereoHeatmapSet:
    """Apply the occlusion policy; the input set is left untouched.

    Draw order is fixed: one uniform per (non-root joint, view), joint-major
    then view, from a single ``rng.random`` call, so seeded replays predict
    exactly which heatmaps were hit.  The root is never occluded.
    """
    joints = hmaps.joints.copy()
    limbs = hmaps.limbs.copy()
    n = tree.n_joints
    u = rng.random(2 * (n - 1)).reshape(n - 1, 2)
    if policy.depth_gamma > 0.0 and depths is not None:
        d = np.maximum(np.asarray(depths, dtype=np.float64), 1e-6)  # (n, 2)
        scale = (d[1:] / d[1:].mean()) ** policy.depth_gamma
        prob = np.clip(policy.rate * scale, 0.0, 1.0)
    else:
        prob = np.full((n - 1, 2), policy.rate)
    for j in range(1, n):
        for view in range(2):
            if u[j - 1, view] >= prob[j - 1, view]:
                continue
            joints[2 * j + view] = 0.0
            # incident limbs: the limb to j's parent, plus limbs to children
            incident = [j] + tree.children(j)
            for child in incident:
                limbs[2 * (child - 1) + view] *= np.float32(policy.limb_factor)
    return StereoHeatmapSet(joints=joints, limbs=limbs)


def render_sample(tree: SkeletonTree, rig: StereoCamera, pose: np.ndarray,
                  sigma: float, limb_width: float):
    """Render stereo joint and limb heatmaps for one pose.

    Returns (StereoHeatmapSet, depths (n_joints, 2)).
    """
    n = tree.n_joints
    res = rig.resolution
    joints = np.zeros((2 * n, res, res), dtype=np.float32)
    limbs = np.zeros((2 * (n - 1), 2, res, res), dtype=np.float32)
    depths = np.zeros((n, 2), dtype=np.float64)
    for view, cam in enumerate(rig.views):
        coords, z, in_front = cam.project(pose)
        depths[:, view] = z
        for j in range(n):
            joints[2 * j + view] = render_joint_heatmap(
                coords[j], bool(in_front[j]), sigma, res)
        cam_pose = cam.to_camera(pose)
        for parent, child in tree.limbs:
            d_cam = cam_pose[child] - cam_pose[parent]
            limbs[2 * (child - 1) + view] = render_limb_heatmap(
                coords[parent], coords[child], bool(in_front[parent]),
                bool(in_front[child]), d_cam, limb_width, res)
    return StereoHeatmapSet(joints=joints, limbs=limbs), depths


def generate_sample(tree: SkeletonTree, rig: StereoCamera, policy: OcclusionPolicy,
                    rng: Rng, sigma: float = 2.0, limb_width: float = 1.5):
    """Sample a pose and render its (possibly occluded) stereo heatmaps.

    Draw order within the sample rng is fixed: pose first, occlusion second.
    Returns (pose (n,3) float64, StereoHeatmapSet).
    """
    pose = sample_pose(tree, rng)
    hmaps, depths = render_sample(tree, rig, pose, sigma, limb_width)
    hmaps = occlude(hmaps, tree, policy, rng, depths=depths)
    return pose, hmaps
