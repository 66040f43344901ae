"""Geometric and scene types shared by every other module.

Conventions: quaternions are stored ``(w, x, y, z)``; SE(3) transforms are
dense 4x4 float64 matrices; cameras follow the pinhole convention with +z
forward, +x right and +y down in the camera frame; world units are meters.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-9


def _frozen(a, shape=None, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise InvalidInputError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------- rotations

def quat_to_rotmat(q):
    """Rotation matrices for ``(..., 4)`` wxyz quaternions (normalized first)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return R.reshape(q.shape[:-1] + (3, 3))


def rotmat_to_quat(R):
    """Inverse of :func:`quat_to_rotmat`, returning quaternions with ``w >= 0``."""
    R = np.asarray(R, dtype=np.float64)
    batch = R.shape[:-2]
    m = R.reshape(-1, 3, 3)
    # Each candidate is numerically safe when its leading component is the largest.
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    diag = np.stack([tr, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], axis=1)
    pick = np.argmax(diag, axis=1)
    q = np.empty((len(m), 4))
    for case in range(4):
        sel = pick == case
        if not np.any(sel):
            continue
        a = m[sel]
        if case == 0:
            s = 2.0 * np.sqrt(1.0 + tr[sel])
            q[sel] = np.stack([0.25 * s, (a[:, 2, 1] - a[:, 1, 2]) / s,
                               (a[:, 0, 2] - a[:, 2, 0]) / s, (a[:, 1, 0] - a[:, 0, 1]) / s], 1)
        elif case == 1:
            s = 2.0 * np.sqrt(1.0 + a[:, 0, 0] - a[:, 1, 1] - a[:, 2, 2])
            q[sel] = np.stack([(a[:, 2, 1] - a[:, 1, 2]) / s, 0.25 * s,
                               (a[:, 0, 1] + a[:, 1, 0]) / s, (a[:, 0, 2] + a[:, 2, 0]) / s], 1)
        elif case == 2:
            s = 2.0 * np.sqrt(1.0 + a[:, 1, 1] - a[:, 0, 0] - a[:, 2, 2])
            q[sel] = np.stack([(a[:, 0, 2] - a[:, 2, 0]) / s, (a[:, 0, 1] + a[:, 1, 0]) / s,
                               0.25 * s, (a[:, 1, 2] + a[:, 2, 1]) / s], 1)
        else:
            s = 2.0 * np.sqrt(1.0 + a[:, 2, 2] - a[:, 0, 0] - a[:, 1, 1])
            q[sel] = np.stack([(a[:, 1, 0] - a[:, 0, 1]) / s, (a[:, 0, 2] + a[:, 2, 0]) / s,
                               (a[:, 1, 2] + a[:, 2, 1]) / s, 0.25 * s], 1)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1
    return q.reshape(batch + (4,))


def quat_multiply(a, b):
    """Hamilton product ``a * b`` of wxyz quaternions (broadcasting)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def rotate_quaternions(R, q):
    """Left-multiply the rotations ``q`` by matrices ``R``, renormalized."""
    out = quat_multiply(rotmat_to_quat(R), q)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def rodrigues(axis, angle):
    """Rotation matrix for ``angle`` radians about the unit vector ``axis``."""
    u = np.asarray(axis, dtype=np.float64)
    K = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def covariance_from_rs(rotation, scale):
    """Covariance ``R S S^T R^T`` of a Gaussian from its quaternion and scales."""
    rotation = np.asarray(rotation, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(scale))):
        raise InvalidInputError("non-finite rotation or scale")
    if np.any(scale <= 0):
        raise InvalidInputError("scale components must be positive")
    R = quat_to_rotmat(rotation)
    M = R * scale[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# --------------------------------------------------------------------- SE(3)

def se3_identity():
    return np.eye(4)


def se3_from_rt(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def translation(x, y=None, z=None):
    t = np.asarray(x if y is None else (x, y, z), dtype=np.float64)
    return se3_from_rt(np.eye(3), t)


def rot_x(angle):
    return se3_from_rt(rodrigues((1.0, 0.0, 0.0), angle), np.zeros(3))


def rot_y(angle):
    return se3_from_rt(rodrigues((0.0, 1.0, 0.0), angle), np.zeros(3))


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    T = np.eye(4)
    T[:2, :2] = [[c, -s], [s, c]]
    return T


def check_se3(T, tol=UNIT_TOL):
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        raise InvalidInputError("SE3 must be a finite 4x4 matrix")
    if np.any(T[3] != (0.0, 0.0, 0.0, 1.0)):
        raise InvalidInputError("SE3 bottom row must be (0, 0, 0, 1)")
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or np.linalg.det(R) <= 0:
        raise InvalidInputError("SE3 rotation block is not a proper rotation")
    return T


def se3_compose(a, b):
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def se3_apply(t, p):
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return p @ t[:3, :3].T + t[:3, 3]


def se3_inverse(t):
    t = np.asarray(t, dtype=np.float64)
    R = t[:3, :3]
    return se3_from_rt(R.T, -R.T @ t[:3, 3])


# --------------------------------------------------------------- domain types

@dataclass(frozen=True)
class GaussianSphere:
    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray
    skin_logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean, (3,)))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (4,)))
        object.__setattr__(self, "scale", _frozen(self.scale, (3,)))
        object.__setattr__(self, "color", _frozen(self.color, (3,)))
        object.__setattr__(self, "skin_logits", _frozen(np.atleast_1d(self.skin_logits)))
        object.__setattr__(self, "opacity", float(self.opacity))
        _validate_gaussian_arrays(self.mean[None], self.rotation[None], self.scale[None],
                                  np.array([self.opacity]), self.color[None],
                                  self.skin_logits[None])

    @property
    def skin_weights(self):
        return softmax(self.skin_logits)

    @property
    def covariance(self):
        return covariance_from_rs(self.rotation, self.scale)


def _validate_gaussian_arrays(means, rotations, scales, opacities, colors, skin_logits):
    for name, arr in (("mean", means), ("rotation", rotations), ("scale", scales),
                      ("opacity", opacities), ("color", colors),
                      ("skin_logits", skin_logits)):
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"non-finite {name}")
    if len(rotations) and np.max(np.abs(np.linalg.norm(rotations, axis=1) - 1.0)) > UNIT_TOL:
        raise InvalidInputError("rotation quaternions must be unit-norm")
    if np.any(scales <= 0):
        raise InvalidInputError("scales must be strictly positive")
    if np.any(opacities < 0) or np.any(opacities > 1):
        raise InvalidInputError("opacity must lie in [0, 1]")


class Scene:
    """An ordered set of Gaussians stored as parallel arrays.

    ``gaussians`` materializes :class:`GaussianSphere` views on demand; batch
    operations work directly on the arrays.
    """

    def __init__(self, means, rotations, scales, opacities, colors, skin_logits,
                 part_count: int):
        n = len(means)
        self.part_count = int(part_count)
        if self.part_count < 0:
            raise InvalidInputError("part_count must be non-negative")
        self.means = _frozen(np.reshape(means, (n, 3)))
        self.rotations = _frozen(np.reshape(rotations, (n, 4)))
        self.scales = _frozen(np.reshape(scales, (n, 3)))
        self.opacities = _frozen(np.reshape(opacities, (n,)))
        self.colors = _frozen(np.reshape(colors, (n, 3)))
        self.skin_logits = _frozen(np.reshape(skin_logits, (n, self.part_count + 1)))
        _validate_gaussian_arrays(self.means, self.rotations, self.scales,
                                  self.opacities, self.colors, self.skin_logits)

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[GaussianSphere], part_count: int):
        gs = list(gaussians)
        for g in gs:
            if len(g.skin_logits) != part_count + 1:
                raise InvalidInputError("skin_logits length must equal part_count + 1")
        if not gs:
            return cls.empty(part_count)
        return cls(np.array([g.mean for g in gs]), np.array([g.rotation for g in gs]),
                   np.array([g.scale for g in gs]), np.array([g.opacity for g in gs]),
                   np.array([g.color for g in gs]), np.array([g.skin_logits for g in gs]),
                   part_count)

    @classmethod
    def empty(cls, part_count=0):
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0),
                   np.zeros((0, 3)), np.zeros((0, part_count + 1)), part_count)

    def __len__(self):
        return len(self.means)

    @property
    def gaussians(self) -> tuple:
        return tuple(GaussianSphere(self.means[i], self.rotations[i], self.scales[i],
                                    self.opacities[i], self.colors[i], self.skin_logits[i])
                     for i in range(len(self)))

    def replace(self, **arrays) -> "Scene":
        fields = dict(means=self.means, rotations=self.rotations, scales=self.scales,
                      opacities=self.opacities, colors=self.colors,
                      skin_logits=self.skin_logits, part_count=self.part_count)
        fields.update(arrays)
        return Scene(**fields)

    def subset(self, index) -> "Scene":
        return Scene(self.means[index], self.rotations[index], self.scales[index],
                     self.opacities[index], self.colors[index], self.skin_logits[index],
                     self.part_count)

    @property
    def skin_weights(self):
        return softmax(self.skin_logits, axis=1)

    def part_labels(self):
        """Index of the dominant bone for every Gaussian (0 is the static base)."""
        return np.argmax(self.skin_logits, axis=1)

    def to_dict(self):
        return {
            "part_count": self.part_count,
            "gaussians": [
                {"mean": self.means[i].tolist(), "rotation": self.rotations[i].tolist(),
                 "scale": self.scales[i].tolist(), "opacity": float(self.opacities[i]),
                 "color": self.colors[i].tolist(),
                 "skin_logits": self.skin_logits[i].tolist()}
                for i in range(len(self))
            ],
        }

    @classmethod
    def from_dict(cls, d):
        k = int(d["part_count"])
        gs = d["gaussians"]
        if not gs:
            return cls.empty(k)
        return cls(np.array([g["mean"] for g in gs]), np.array([g["rotation"] for g in gs]),
                   np.array([g["scale"] for g in gs]), np.array([g["opacity"] for g in gs]),
                   np.array([g["color"] for g in gs]),
                   np.array([g["skin_logits"] for g in gs]), k)


class JointType(str, enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


@dataclass(frozen=True)
class JointSpec:
    axis: np.ndarray
    origin: np.ndarray
    joint_type: JointType

    def __post_init__(self):
        object.__setattr__(self, "axis", _frozen(self.axis, (3,)))
        object.__setattr__(self, "origin", _frozen(self.origin, (3,)))
        object.__setattr__(self, "joint_type", JointType(self.joint_type))
        if not (np.all(np.isfinite(self.axis)) and np.all(np.isfinite(self.origin))):
            raise InvalidInputError("non-finite joint parameters")
        if abs(np.linalg.norm(self.axis) - 1.0) > UNIT_TOL:
            raise InvalidInputError("joint axis must be unit-norm")

    @classmethod
    def normalized(cls, axis, origin, joint_type):
        axis = np.asarray(axis, dtype=np.float64)
        return cls(axis / np.linalg.norm(axis), origin, joint_type)

    @property
    def is_revolute(self):
        return self.joint_type is JointType.REVOLUTE

    def to_dict(self):
        return {"axis": self.axis.tolist(), "origin": self.origin.tolist(),
                "joint_type": self.joint_type.value}

    @classmethod
    def from_dict(cls, d):
        return cls(d["axis"], d["origin"], d["joint_type"])


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        object.__setattr__(self, "extrinsics", _frozen(self.extrinsics, (4, 4)))
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        check_se3(self.extrinsics)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), *, width=128, height=128,
                fov_deg=60.0):
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])  # rows: camera axes in world frame
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height,
                   se3_from_rt(R, -R @ eye))

    @property
    def rotation(self):
        return self.extrinsics[:3, :3]

    @property
    def center(self):
        return -self.rotation.T @ self.extrinsics[:3, 3]

    @property
    def forward(self):
        """Optical axis direction in world coordinates."""
        return self.rotation[2].copy()

    def to_camera(self, points):
        return se3_apply(self.extrinsics, points)

    def project(self, points):
        """Pixel coordinates and camera-frame depth of world points."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        uv = np.stack([self.fx * pc[..., 0] / z + self.cx,
                       self.fy * pc[..., 1] / z + self.cy], axis=-1)
        return uv, z

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "extrinsics": self.extrinsics.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]), np.array(d["extrinsics"]))


@dataclass(frozen=True)
class Image:
    rgb: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        h, w = np.shape(self.depth)
        object.__setattr__(self, "rgb", _frozen(self.rgb, (h, w, 3)))
        object.__setattr__(self, "depth", _frozen(self.depth, (h, w)))
        object.__setattr__(self, "alpha", _frozen(self.alpha, (h, w)))

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


# ------------------------------------------------------------------------- IO

def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def dump_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def save_scene(scene: Scene, path):
    dump_json(scene.to_dict(), path)


def load_scene(path) -> Scene:
    return Scene.from_dict(load_json(path))


def joints_to_dict(joints: Sequence[JointSpec], grasp_points=None):
    out = []
    for i, j in enumerate(joints):
        d = j.to_dict()
        if grasp_points is not None:
            d["grasp_point"] = np.asarray(grasp_points[i]).tolist()
        out.append(d)
    return {"joints": out}


def joints_from_dict(d):
    joints = [JointSpec.from_dict(j) for j in d["joints"]]
    grasps = [np.array(j["grasp_point"]) if "grasp_point" in j else None for j in d["joints"]]
    return joints, grasps
