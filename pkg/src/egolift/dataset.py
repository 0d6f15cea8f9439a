"""Dataset generation and on-disk layout.

A dataset directory holds ``manifest.json`` plus three tensor container
files: ``poses.bin`` (S, N_J, 3) float64 cm, ``heatmaps_joint.bin``
(S, 2*N_J, r, r) float32 and ``heatmaps_limb.bin`` (S, 2*N_L, 2, r, r)
float32.  The manifest records counts, shapes, seed, skeleton, camera,
rendering and occlusion parameters, so the directory is self-describing and
round-trips bitwise.  External exporters can target the same layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import StereoCamera, default_rig, rig_from_dict, rig_to_dict
from .heatmaps import OcclusionPolicy, generate_sample
from .rng import Rng
from .skeleton import SkeletonTree, build_skeleton
from .tensor_io import read_tensor, write_tensor

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
_FILES = {"poses": "poses.bin", "joints": "heatmaps_joint.bin", "limbs": "heatmaps_limb.bin"}


class DatasetError(IOError):
    """Missing, inconsistent or version-mismatched dataset directory."""


@dataclass
class Dataset:
    poses: np.ndarray          # (S, N_J, 3) float64
    joint_heatmaps: np.ndarray  # (S, 2*N_J, r, r) float32
    limb_heatmaps: np.ndarray   # (S, 2*N_L, 2, r, r) float32
    tree: SkeletonTree
    rig: StereoCamera
    meta: dict

    def __len__(self) -> int:
        return self.poses.shape[0]

    @property
    def resolution(self) -> int:
        return self.joint_heatmaps.shape[-1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        meta = dict(self.meta)
        meta["n_samples"] = int(len(idx))
        return Dataset(self.poses[idx], self.joint_heatmaps[idx],
                       self.limb_heatmaps[idx], self.tree, self.rig, meta)


def generate_dataset(n_samples: int, seed: int, tree: SkeletonTree | None = None,
                     rig: StereoCamera | None = None,
                     policy: OcclusionPolicy | None = None,
                     sigma: float = 2.0, limb_width: float = 1.5) -> Dataset:
    """Generate samples deterministically.

    Each sample draws from its own generator derived from (seed, index), so
    any parallel split produces the identical dataset.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    tree = tree or build_skeleton()
    rig = rig or default_rig()
    policy = policy or OcclusionPolicy()
    master = Rng(seed)
    n, res = tree.n_joints, rig.resolution
    poses = np.zeros((n_samples, n, 3), dtype=np.float64)
    joints = np.zeros((n_samples, 2 * n, res, res), dtype=np.float32)
    limbs = np.zeros((n_samples, 2 * (n - 1), 2, res, res), dtype=np.float32)
    for i in range(n_samples):
        pose, hmaps = generate_sample(tree, rig, policy, master.derive(i),
                                      sigma=sigma, limb_width=limb_width)
        poses[i] = pose
        joints[i] = hmaps.joints
        limbs[i] = hmaps.limbs
    meta = {
        "format_version": FORMAT_VERSION,
        "n_samples": n_samples,
        "n_joints": n,
        "n_limbs": n - 1,
        "resolution": res,
        "sigma": sigma,
        "limb_width": limb_width,
        "seed": seed,
        "units": "cm",
        "occlusion": policy.to_dict(),
        "skeleton": tree.to_dict(),
        "camera": rig_to_dict(rig),
    }
    return Dataset(poses, joints, limbs, tree, rig, meta)


def write_dataset(ds: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / _FILES["poses"], ds.poses)
    write_tensor(directory / _FILES["joints"], ds.joint_heatmaps)
    write_tensor(directory / _FILES["limbs"], ds.limb_heatmaps)
    with open(directory / MANIFEST, "w") as fh:
        json.dump(ds.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise DatasetError(f"{directory}: no {MANIFEST} found")
    meta = json.loads(manifest_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"{directory}: dataset format version {meta.get('format_version')} "
            f"!= {FORMAT_VERSION}")
    poses = read_tensor(directory / _FILES["poses"])
    joints = read_tensor(directory / _FILES["joints"])
    limbs = read_tensor(directory / _FILES["limbs"])
    n, nl, s, res = meta["n_joints"], meta["n_limbs"], meta["n_samples"], meta["resolution"]
    expected = {
        _FILES["poses"]: ((s, n, 3), poses.shape),
        _FILES["joints"]: ((s, 2 * n, res, res), joints.shape),
        _FILES["limbs"]: ((s, 2 * nl, 2, res, res), limbs.shape),
    }
    for fname, (want, got) in expected.items():
        if want != got:
            raise DatasetError(
                f"{directory / fname}: manifest says shape {want}, tensor has {got}")
    return Dataset(poses, joints, limbs, SkeletonTree.from_dict(meta["skeleton"]),
                   rig_from_dict(meta["camera"]), meta)
