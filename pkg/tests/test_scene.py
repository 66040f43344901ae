import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from artsplat.errors import InvalidInputError
from artsplat.scene import (Camera, GaussianSphere, Image, JointSpec, Scene, check_se3,
                            covariance_from_rs, joints_from_dict, joints_to_dict, load_scene,
                            quat_to_rotmat, rodrigues, rotmat_to_quat, save_scene, se3_apply,
                            se3_compose, se3_from_rt, se3_inverse)

from oracles import covariance, random_scene

unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda q: np.linalg.norm(q) > 0.1).map(lambda q: np.array(q) / np.linalg.norm(q))


@given(unit_quats)
def test_quaternion_matches_scipy_and_round_trips(q):
    R = quat_to_rotmat(q)
    np.testing.assert_allclose(R, Rotation.from_quat(q[[1, 2, 3, 0]]).as_matrix(), atol=1e-12)
    q2 = rotmat_to_quat(R)
    assert abs(abs(q2 @ q) - 1.0) < 1e-12
    assert q2[0] >= 0


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.floats(-6, 6))
def test_rodrigues_matches_rotvec(axis, angle):
    u = np.array(axis) / np.linalg.norm(axis)
    np.testing.assert_allclose(rodrigues(u, angle), Rotation.from_rotvec(u * angle).as_matrix(),
                               atol=1e-12)


def test_se3_inverse_and_compose():
    rng = np.random.default_rng(0)
    T = se3_from_rt(Rotation.random(random_state=1).as_matrix(), rng.normal(size=3))
    np.testing.assert_allclose(se3_compose(T, se3_inverse(T)), np.eye(4), atol=1e-14)
    p = rng.normal(size=(5, 3))
    np.testing.assert_allclose(se3_apply(se3_inverse(T), se3_apply(T, p)), p, atol=1e-14)


def test_check_se3_rejects_bad_matrices():
    bad = np.eye(4)
    bad[3, 0] = 1.0
    with pytest.raises(InvalidInputError):
        check_se3(bad)
    reflect = np.diag([1.0, 1.0, -1.0, 1.0])
    with pytest.raises(InvalidInputError):
        check_se3(reflect)


@given(unit_quats, st.lists(st.floats(1e-3, 2.0), min_size=3, max_size=3))
def test_covariance_is_symmetric_psd_and_matches_oracle(q, s):
    C = covariance_from_rs(q, s)
    np.testing.assert_allclose(C, C.T, atol=0)
    assert np.min(np.linalg.eigvalsh(C)) >= -1e-12
    np.testing.assert_allclose(C, covariance(q, s), atol=1e-12)


def test_covariance_rejects_bad_scale():
    with pytest.raises(InvalidInputError):
        covariance_from_rs([1, 0, 0, 0], [0.1, 0.0, 0.1])
    with pytest.raises(InvalidInputError):
        covariance_from_rs([1, 0, 0, 0], [0.1, np.nan, 0.1])


def test_gaussian_validation():
    ok = dict(mean=[0, 0, 0], rotation=[1, 0, 0, 0], scale=[0.1] * 3, opacity=0.5,
              color=[1, 0, 0], skin_logits=[0.0])
    GaussianSphere(**ok)
    for key, value in (("rotation", [2, 0, 0, 0]), ("scale", [0.1, -1, 0.1]), ("opacity", 1.5),
                       ("mean", [np.inf, 0, 0])):
        with pytest.raises(InvalidInputError):
            GaussianSphere(**{**ok, key: value})


def test_scene_round_trips_through_json(tmp_path):
    scene = random_scene(np.random.default_rng(3), 7, part_count=2)
    save_scene(scene, tmp_path / "s.json")
    back = load_scene(tmp_path / "s.json")
    for name in ("means", "rotations", "scales", "opacities", "colors", "skin_logits"):
        np.testing.assert_array_equal(getattr(back, name), getattr(scene, name))
    assert back.part_count == 2
    assert len(Scene.from_gaussians(scene.gaussians, 2)) == 7


def test_scene_arrays_are_read_only():
    scene = random_scene(np.random.default_rng(0), 3)
    with pytest.raises(ValueError):
        scene.means[0, 0] = 1.0


def test_skin_logit_width_must_match_part_count():
    g = GaussianSphere([0, 0, 0], [1, 0, 0, 0], [0.1] * 3, 0.5, [1, 1, 1], [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        Scene.from_gaussians([g], part_count=2)


def test_joint_spec_requires_unit_axis_and_round_trips():
    with pytest.raises(InvalidInputError):
        JointSpec([0, 0, 2], [0, 0, 0], "revolute")
    j = JointSpec.normalized([0, 0, 2], [1, 2, 3], "prismatic")
    joints, grasps = joints_from_dict(joints_to_dict([j], [np.ones(3)]))
    np.testing.assert_array_equal(joints[0].axis, [0, 0, 1])
    np.testing.assert_array_equal(grasps[0], np.ones(3))


def test_look_at_camera_centers_target():
    cam = Camera.look_at([1.0, -2.0, 0.5], [0.1, 0.2, 0.3], width=64, height=48)
    uv, z = cam.project(np.array([[0.1, 0.2, 0.3]]))
    np.testing.assert_allclose(uv[0], [31.5, 23.5], atol=1e-12)
    np.testing.assert_allclose(cam.center, [1.0, -2.0, 0.5], atol=1e-12)
    assert z[0] > 0
    np.testing.assert_allclose(Camera.from_dict(cam.to_dict()).extrinsics, cam.extrinsics)


def test_image_shapes_validated():
    with pytest.raises(InvalidInputError):
        Image(np.zeros((4, 4, 3)), np.zeros((4, 5)), np.zeros((4, 5)))
