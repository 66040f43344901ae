"""Robot-chain forward kinematics, articulated-skeleton transforms and LBS."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBlendError, DimensionError, JointTypeError, ModelError
from .scene import (GaussianSphere, JointSpec, JointType, Scene, rodrigues, rotate_quaternions,
                    se3_apply, se3_from_rt, softmax, translation)

DEGENERATE_DET = 1e-12


class LinkKind(str, enum.Enum):
    REVOLUTE = "revolute"    # pose value adds to theta
    PRISMATIC = "prismatic"  # pose value adds to d


@dataclass(frozen=True)
class MDHParams:
    beta: float
    a: float
    d: float
    theta: float


@dataclass(frozen=True)
class RobotLink:
    params: MDHParams
    kind: LinkKind
    gaussian_indices: tuple


@dataclass(frozen=True)
class RobotModel:
    links: tuple

    def validate(self, n_gaussians):
        seen = np.zeros(n_gaussians, dtype=int)
        for link in self.links:
            idx = np.asarray(link.gaussian_indices, dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= n_gaussians):
                raise ModelError("link gaussian index out of range")
            np.add.at(seen, idx, 1)
        if np.any(seen != 1):
            raise ModelError("link indices must partition the robot scene")

    def to_dict(self):
        return {"links": [
            {"beta": l.params.beta, "a": l.params.a, "d": l.params.d,
             "theta": l.params.theta, "kind": l.kind.value,
             "gaussian_indices": list(map(int, l.gaussian_indices))}
            for l in self.links]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(
            RobotLink(MDHParams(float(l["beta"]), float(l["a"]), float(l["d"]),
                                float(l["theta"])),
                      LinkKind(l["kind"]), tuple(l["gaussian_indices"]))
            for l in d["links"]))


def mdh_link_transform(params: MDHParams):
    ct, st = np.cos(params.theta), np.sin(params.theta)
    cb, sb = np.cos(params.beta), np.sin(params.beta)
    return np.array([
        [ct, -st * cb, st * sb, params.a * ct],
        [st, ct * cb, -ct * sb, params.a * st],
        [0.0, sb, cb, params.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def forward_kinematics(model: RobotModel, pose) -> list:
    """Frames ``[T_0, ..., T_K]`` of every joint relative to the base; ``T_0 = I``."""
    pose = np.atleast_1d(np.asarray(pose, dtype=np.float64))
    if len(pose) != len(model.links):
        raise DimensionError(f"pose has {len(pose)} values for {len(model.links)} links")
    frames = [np.eye(4)]
    for link, value in zip(model.links, pose):
        p = link.params
        if link.kind is LinkKind.REVOLUTE:
            p = MDHParams(p.beta, p.a, p.d, p.theta + value)
        else:
            p = MDHParams(p.beta, p.a, p.d + value, p.theta)
        frames.append(frames[-1] @ mdh_link_transform(p))
    return frames


def pose_robot(model: RobotModel, robot_scene: Scene, pose) -> Scene:
    """Rigidly move each link's Gaussians by the frame that follows its joint."""
    model.validate(len(robot_scene))
    frames = forward_kinematics(model, pose)
    means = robot_scene.means.copy()
    rots = robot_scene.rotations.copy()
    for j, link in enumerate(model.links):
        idx = np.asarray(link.gaussian_indices, dtype=int)
        T = frames[j + 1]
        means[idx] = se3_apply(T, robot_scene.means[idx])
        rots[idx] = rotate_quaternions(T[:3, :3], robot_scene.rotations[idx])
    return robot_scene.replace(means=means, rotations=rots)


def revolute_transform(joint: JointSpec, angle: float):
    if joint.joint_type is not JointType.REVOLUTE:
        raise JointTypeError("revolute_transform needs a revolute joint")
    R = rodrigues(joint.axis, angle)
    return se3_from_rt(R, joint.origin - R @ joint.origin)


def prismatic_transform(joint: JointSpec, displacement: float):
    if joint.joint_type is not JointType.PRISMATIC:
        raise JointTypeError("prismatic_transform needs a prismatic joint")
    return translation(displacement * joint.axis)


def skeleton_transforms(joints: Sequence[JointSpec], pose) -> list:
    pose = np.atleast_1d(np.asarray(pose, dtype=np.float64))
    if len(pose) != len(joints):
        raise DimensionError(f"pose has {len(pose)} values for {len(joints)} joints")
    bones = [np.eye(4)]
    for joint, value in zip(joints, pose):
        if joint.is_revolute:
            bones.append(revolute_transform(joint, value))
        else:
            bones.append(prismatic_transform(joint, value))
    return bones


def polar_rotation(A):
    """Orthonormal polar factor of a (batch of) 3x3 matrix via SVD."""
    U, _, Vt = np.linalg.svd(A)
    return U @ Vt


def blend_transforms(weights, bones):
    """Per-Gaussian weighted sums ``sum_j w_j B_j``; weights shaped (n, K+1)."""
    B = np.asarray(bones, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[-1] != len(B):
        raise DimensionError("skin weight count must equal the number of bones")
    return np.einsum("nj,jab->nab", weights, B)


def _deform_arrays(means, rotations, weights, bones):
    M = blend_transforms(weights, bones)
    A = M[:, :3, :3]
    if len(A) and np.min(np.linalg.det(A)) <= DEGENERATE_DET:
        raise DegenerateBlendError("blended rotation block is singular")
    new_means = np.einsum("nab,nb->na", A, means) + M[:, :3, 3]
    return new_means, rotate_quaternions(polar_rotation(A), rotations)


def lbs_deform(g: GaussianSphere, bones) -> GaussianSphere:
    """Linear-blend-skin a single Gaussian; scale, opacity and color are kept."""
    weights = softmax(g.skin_logits)
    means, rots = _deform_arrays(g.mean[None], g.rotation[None], weights[None], bones)
    return GaussianSphere(means[0], rots[0], g.scale, g.opacity, g.color, g.skin_logits)


def deform_scene(scene: Scene, joints: Sequence[JointSpec], pose) -> Scene:
    if scene.part_count != len(joints):
        raise DimensionError("scene.part_count must equal the number of joints")
    bones = skeleton_transforms(joints, pose)
    if len(scene) == 0:
        return scene
    means, rots = _deform_arrays(scene.means, scene.rotations, scene.skin_weights, bones)
    return scene.replace(means=means, rotations=rots)
