import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artsplat.errors import DegenerateBlendError, DimensionError, JointTypeError, ModelError
from artsplat.kinematics import (LinkKind, MDHParams, RobotLink, RobotModel, deform_scene,
                                 forward_kinematics, lbs_deform, pose_robot, prismatic_transform,
                                 revolute_transform, skeleton_transforms)
from artsplat.scene import GaussianSphere, JointSpec, Scene, quat_to_rotmat, se3_apply

from oracles import mdh_matrix, random_scene


def random_chain(rng, n):
    links = tuple(RobotLink(MDHParams(*rng.uniform(-np.pi, np.pi, 1), *rng.uniform(-1, 1, 2),
                                      *rng.uniform(-np.pi, np.pi, 1)),
                            LinkKind.REVOLUTE if rng.random() < 0.6 else LinkKind.PRISMATIC, ())
                  for _ in range(n))
    return RobotModel(links)


def chain_oracle(model, pose):
    T = np.eye(4)
    out = [T]
    for link, v in zip(model.links, pose):
        p = link.params
        theta = p.theta + (v if link.kind is LinkKind.REVOLUTE else 0.0)
        d = p.d + (v if link.kind is LinkKind.PRISMATIC else 0.0)
        T = T @ mdh_matrix(p.beta, p.a, d, theta)
        out.append(T)
    return out


def test_forward_kinematics_matches_chain_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 8))
        model = random_chain(rng, n)
        pose = rng.uniform(-1, 1, n)
        for a, b in zip(forward_kinematics(model, pose), chain_oracle(model, pose)):
            np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_zero_params_give_identity_frames():
    model = RobotModel(tuple(RobotLink(MDHParams(0, 0, 0, 0), LinkKind.REVOLUTE, ())
                             for _ in range(3)))
    for T in forward_kinematics(model, np.zeros(3)):
        np.testing.assert_array_equal(T, np.eye(4))


def test_pose_length_mismatch():
    model = random_chain(np.random.default_rng(1), 3)
    with pytest.raises(DimensionError):
        forward_kinematics(model, np.zeros(2))


def test_pose_robot_moves_links_rigidly_and_validates_partition():
    rng = np.random.default_rng(2)
    scene = random_scene(rng, 6)
    base = random_chain(rng, 2)
    model = RobotModel(tuple(RobotLink(l.params, l.kind, idx)
                             for l, idx in zip(base.links, [(0, 1, 2), (3, 4, 5)])))
    pose = np.array([0.4, -0.2])
    moved = pose_robot(model, scene, pose)
    frames = forward_kinematics(model, pose)
    np.testing.assert_allclose(moved.means[3:], se3_apply(frames[2], scene.means[3:]), atol=1e-12)
    R = quat_to_rotmat(moved.rotations[0])
    np.testing.assert_allclose(R, frames[1][:3, :3] @ quat_to_rotmat(scene.rotations[0]),
                               atol=1e-12)
    bad = RobotModel((RobotLink(base.links[0].params, LinkKind.REVOLUTE, (0, 1)),))
    with pytest.raises(ModelError):
        pose_robot(bad, scene, [0.0])
    assert RobotModel.from_dict(model.to_dict()) == model


def test_revolute_fixes_axis_points_and_prismatic_translates():
    j = JointSpec.normalized([1, 2, 3], [0.5, -0.2, 1.0], "revolute")
    T = revolute_transform(j, 0.7)
    on_axis = j.origin + 0.3 * j.axis
    np.testing.assert_allclose(se3_apply(T, on_axis), on_axis, atol=1e-14)
    p = JointSpec.normalized([0, 1, 0], [0, 0, 0], "prismatic")
    np.testing.assert_allclose(prismatic_transform(p, 0.25)[:3, 3], [0, 0.25, 0])
    with pytest.raises(JointTypeError):
        revolute_transform(p, 0.1)
    with pytest.raises(JointTypeError):
        prismatic_transform(j, 0.1)


def test_lbs_one_hot_equals_rigid_transform():
    rng = np.random.default_rng(4)
    joints = [JointSpec.normalized(rng.normal(size=3), rng.normal(size=3), "revolute"),
              JointSpec.normalized(rng.normal(size=3), rng.normal(size=3), "prismatic")]
    for trial in range(50):
        pose = rng.uniform(-1.5, 1.5, 2)
        bones = skeleton_transforms(joints, pose)
        k = trial % 3
        logits = np.full(3, -1e3)
        logits[k] = 0.0
        q = rng.normal(size=4)
        g = GaussianSphere(rng.normal(size=3), q / np.linalg.norm(q), [0.1, 0.2, 0.3], 0.5,
                           [1, 0, 0], logits)
        out = lbs_deform(g, bones)
        np.testing.assert_allclose(out.mean, se3_apply(bones[k], g.mean), atol=1e-12, rtol=0)
        np.testing.assert_allclose(quat_to_rotmat(out.rotation),
                                   bones[k][:3, :3] @ quat_to_rotmat(g.rotation), atol=1e-12)
        np.testing.assert_array_equal(out.scale, g.scale)


def test_opposing_rotations_blend_to_degenerate():
    j = JointSpec([0, 0, 1.0], [0, 0, 0], "revolute")
    bones = skeleton_transforms([j], [np.pi])
    g = GaussianSphere([1, 0, 0], [1, 0, 0, 0], [0.1] * 3, 0.5, [1, 1, 1], [0.0, 0.0])
    with pytest.raises(DegenerateBlendError):
        lbs_deform(g, bones)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_deform_scene_identity_pose_and_composition(a, b):
    rng = np.random.default_rng(5)
    scene = random_scene(rng, 5, part_count=1)
    j = JointSpec.normalized([0.3, 0.1, 1.0], [0.1, 0.0, 2.0], "revolute")
    same = deform_scene(scene, [j], [0.0])
    np.testing.assert_allclose(same.means, scene.means, atol=1e-13)
    logits = np.tile([-1e3, 0.0], (5, 1))
    rigid = scene.replace(skin_logits=logits)
    twice = deform_scene(deform_scene(rigid, [j], [a]), [j], [b])
    once = deform_scene(rigid, [j], [a + b])
    np.testing.assert_allclose(twice.means, once.means, atol=1e-10)


def test_deform_scene_joint_count_checked():
    scene = random_scene(np.random.default_rng(0), 3, part_count=2)
    with pytest.raises(DimensionError):
        deform_scene(scene, [JointSpec([0, 0, 1.0], [0, 0, 0], "revolute")], [0.0])
