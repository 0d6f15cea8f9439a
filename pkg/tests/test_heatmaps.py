import numpy as np
import pytest

from egolift.camera import default_rig
from egolift.heatmaps import (OcclusionPolicy, StereoHeatmapSet, occlude,
                              render_joint_heatmap, render_limb_heatmap,
                              render_sample)
from egolift.rng import Rng
from egolift.skeleton import build_skeleton, sample_pose


def test_joint_heatmap_peak_and_neighbor():
    hm = render_joint_heatmap((32.0, 32.0), True, sigma=2.0, resolution=64)
    assert hm[32, 32] == 1.0
    assert abs(hm[32, 33] - np.exp(-0.125)) < 1e-6
    assert abs(hm[33, 32] - np.exp(-0.125)) < 1e-6


def test_joint_heatmap_out_of_view_all_zero():
    assert (render_joint_heatmap((10.0, 10.0), False, 2.0, 64) == 0).all()
    assert (render_joint_heatmap((-5.0, 10.0), True, 2.0, 64) == 0).all()
    assert (render_joint_heatmap((10.0, 80.0), True, 2.0, 64) == 0).all()


def test_joint_heatmap_rejects_bad_sigma():
    with pytest.raises(ValueError):
        render_joint_heatmap((1.0, 1.0), True, 0.0, 64)


def test_joint_heatmap_sum_matches_separable_truncated_gaussian():
    # the rendered map is a product of two 1-D truncated Gaussians around the
    # snapped center, so its total is the product of the 1-D sums
    for seed in range(20):
        rng = Rng(seed)
        coord = rng.uniform(2, 5.0, 58.0)
        sigma = 1.0 + 2.0 * rng.random(1)[0]
        hm = render_joint_heatmap(coord, True, sigma, 64)
        cx = int(np.floor(coord[0] + 0.5))
        cy = int(np.floor(coord[1] + 0.5))
        ax = np.arange(64)
        sx = np.exp(-((ax - cx) ** 2) / (2 * sigma * sigma)).sum()
        sy = np.exp(-((ax - cy) ** 2) / (2 * sigma * sigma)).sum()
        assert abs(hm.sum() - sx * sy) < 1e-4 * sx * sy


def test_joint_heatmap_values_in_unit_interval():
    hm = render_joint_heatmap((17.3, 44.9), True, 2.0, 64)
    assert hm.min() >= 0.0 and hm.max() == 1.0


def test_argmax_is_nearest_pixel_to_projection():
    tree = build_skeleton()
    rig = default_rig()
    for seed in range(30):
        pose = sample_pose(tree, Rng(seed))
        hmaps, _ = render_sample(tree, rig, pose, sigma=2.0, limb_width=1.5)
        for view, cam in enumerate(rig.views):
            coords, _, ok = cam.project(pose)
            for j in range(tree.n_joints):
                hm = hmaps.joints[2 * j + view]
                pixel = cam.pixel_of(coords[j]) if ok[j] else None
                if pixel is None:
                    assert (hm == 0).all()
                else:
                    row, col = np.unravel_index(hm.argmax(), hm.shape)
                    assert (col, row) == pixel


def test_limb_parallel_to_image_plane():
    # direction purely in the camera xy plane: elevation 0
    hm = render_limb_heatmap((10.0, 32.0), (50.0, 32.0), True, True,
                             (1.0, 0.0, 0.0), width=1.5, resolution=64)
    on_line = hm[:, 32, 10:51]
    assert (hm[0] == 0).all()
    assert (on_line[1] == 1.0).all()


def test_limb_along_viewing_axis_degenerates_to_point():
    hm = render_limb_heatmap((20.0, 20.0), (20.0, 20.0), True, True,
                             (0.0, 0.0, 5.0), width=1.5, resolution=64)
    assert hm[0, 20, 20] == 1.0
    assert hm[1, 20, 20] == 0.0
    assert (np.abs(hm[0]) > 0).sum() <= 9  # just the pixels within the band


def test_limb_band_matches_per_pixel_distance_oracle():
    for seed in range(15):
        rng = Rng(seed + 100)
        a = rng.uniform(2, 0.0, 63.0)
        b = rng.uniform(2, 0.0, 63.0)
        d = rng.normal(3)  # generic: both channels nonzero on the band
        w = 1.5
        hm = render_limb_heatmap(a, b, True, True, d, width=w, resolution=64)
        ab = b - a
        den = float(ab @ ab)
        want = np.zeros((64, 64), dtype=bool)
        for row in range(64):
            for col in range(64):
                p = np.array([col, row], dtype=float)
                t = np.clip((p - a) @ ab / den, 0, 1)
                want[row, col] = np.linalg.norm(p - (a + t * ab)) <= w
        assert np.array_equal(hm[1] != 0, want)
        assert np.array_equal(hm[0] != 0, want)


def test_limb_channels_encode_elevation():
    d = np.array([3.0, 4.0, 5.0])
    hm = render_limb_heatmap((10.0, 10.0), (40.0, 40.0), True, True, d, 1.5, 64)
    sin_t = d[2] / np.linalg.norm(d)
    cos_t = np.hypot(d[0], d[1]) / np.linalg.norm(d)
    mask = hm[1] != 0
    assert np.allclose(hm[0][mask], sin_t, atol=1e-6)
    assert np.allclose(hm[1][mask], cos_t, atol=1e-6)
    assert hm.min() >= -1.0 and hm.max() <= 1.0


def test_limb_zero_when_behind_camera_or_fully_outside():
    assert (render_limb_heatmap((1, 1), (5, 5), False, True, (1, 0, 0), 1.5, 64) == 0).all()
    assert (render_limb_heatmap((-10, -10), (-5, -20), True, True, (1, 0, 0), 1.5, 64) == 0).all()


def _make_set(tree, rig, seed):
    pose = sample_pose(tree, Rng(seed))
    hmaps, depths = render_sample(tree, rig, pose, sigma=2.0, limb_width=1.5)
    return hmaps, depths


def test_occlude_rate_zero_is_bitwise_identity():
    tree = build_skeleton()
    hmaps, depths = _make_set(tree, default_rig(resolution=16), 3)
    out = occlude(hmaps, tree, OcclusionPolicy(rate=0.0), Rng(7), depths)
    assert np.array_equal(out.joints, hmaps.joints)
    assert np.array_equal(out.limbs, hmaps.limbs)


def test_occlude_rate_one_zeroes_all_nonroot_joints():
    tree = build_skeleton()
    hmaps, depths = _make_set(tree, default_rig(resolution=16), 3)
    out = occlude(hmaps, tree, OcclusionPolicy(rate=1.0), Rng(7), depths)
    assert (out.joints[2:] == 0).all()  # all non-root joint heatmaps
    assert np.array_equal(out.joints[:2], hmaps.joints[:2])


def test_occlude_matches_seeded_replay_oracle():
    tree = build_skeleton()
    rig = default_rig(resolution=16)
    hmaps, depths = _make_set(tree, rig, 5)
    # make every non-root map visibly nonzero so zeroing is observable
    joints = hmaps.joints.copy()
    joints[:] = np.maximum(joints, 0.25)
    full = StereoHeatmapSet(joints=joints, limbs=hmaps.limbs)
    rate, seed = 0.3, 7
    out = occlude(full, tree, OcclusionPolicy(rate=rate), Rng(seed), depths)
    draws = Rng(seed).random(2 * (tree.n_joints - 1)).reshape(-1, 2)
    expected = (draws < rate)
    got = np.array([[(out.joints[2 * j + v] == 0).all() for v in range(2)]
                    for j in range(1, tree.n_joints)])
    assert np.array_equal(got, expected)
    assert int(got.sum()) == int(expected.sum())


def test_occlude_attenuates_incident_limbs():
    tree = build_skeleton({"parents": [-1, 0, 1], "bone_lengths": [0, 10, 10]})
    joints = np.ones((6, 8, 8), dtype=np.float32)
    limbs = np.ones((4, 2, 8, 8), dtype=np.float32)
    hmaps = StereoHeatmapSet(joints=joints, limbs=limbs)
    out = occlude(hmaps, tree, OcclusionPolicy(rate=1.0, limb_factor=0.5), Rng(0))
    # joint 1 occluded in both views: limb 0 (to parent) and limb 1 (to child)
    # both attenuated; joint 2 also occluded, attenuating limb 1 again
    assert np.allclose(out.limbs[0], 0.5)
    assert np.allclose(out.limbs[2], 0.25)


def test_occlude_rejects_bad_rate():
    with pytest.raises(ValueError):
        OcclusionPolicy(rate=1.5)
    with pytest.raises(ValueError):
        OcclusionPolicy(rate=-0.1)
