import numpy as np
import pytest

from egolift.camera import StereoCamera, default_rig, rig_from_dict, rig_to_dict
from egolift.rng import Rng


def test_optical_axis_projects_to_principal_point():
    rig = default_rig()
    cam = rig.left
    # points along the camera's viewing axis, any depth
    for depth in (5.0, 50.0, 500.0):
        p = cam.position + depth * cam.rotation.T @ np.array([0.0, 0.0, 1.0])
        coords, z, ok = cam.project(p[None, :])
        assert ok[0] and abs(z[0] - depth) < 1e-9
        assert abs(coords[0, 0] - cam.cx) < 1e-9
        assert abs(coords[0, 1] - cam.cy) < 1e-9


def test_behind_camera_is_flagged_not_an_error():
    cam = default_rig().left
    behind = cam.position - 10.0 * cam.rotation.T @ np.array([0.0, 0.0, 1.0])
    _, _, ok = cam.project(behind[None, :])
    assert not ok[0]


def test_projection_matches_homogeneous_division_oracle():
    cam = default_rig(resolution=64).left
    rng = Rng(0)
    pts = rng.normal((200, 3)) * 40.0 + np.array([0.0, 60.0, 10.0])
    coords, z, ok = cam.project(pts)
    K = np.array([[cam.focal, 0, cam.cx], [0, cam.focal, cam.cy], [0, 0, 1.0]])
    for i in range(len(pts)):
        cam_pt = cam.rotation @ (pts[i] - cam.position)
        if cam_pt[2] <= 0:
            assert not ok[i]
            continue
        hom = K @ cam_pt
        want = hom[:2] / hom[2]
        assert np.abs(coords[i] - want).max() < 1e-6
        assert abs(z[i] - cam_pt[2]) < 1e-9


def test_default_rig_geometry():
    rig = default_rig()
    assert abs(rig.baseline - 8.0) < 1e-12
    assert rig.left.position[1] == 2.0  # 2 cm below the rig origin (y down)
    assert rig.resolution == 64


def test_zero_baseline_rejected():
    rig = default_rig()
    with pytest.raises(ValueError):
        StereoCamera(left=rig.left, right=rig.left)


def test_rig_dict_round_trip():
    rig = default_rig(resolution=16, fov_deg=120.0)
    clone = rig_from_dict(rig_to_dict(rig))
    assert np.array_equal(clone.left.rotation, rig.left.rotation)
    assert np.array_equal(clone.right.position, rig.right.position)
    assert clone.left.focal == rig.left.focal
    assert clone.resolution == 16


def test_pixel_of_bounds():
    cam = default_rig(resolution=64).left
    assert cam.pixel_of((31.4, 31.6)) == (31, 32)
    assert cam.pixel_of((-1.0, 5.0)) is None
    assert cam.pixel_of((63.4, 0.0)) == (63, 0)
    assert cam.pixel_of((63.6, 0.0)) is None
