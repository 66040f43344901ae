"""Differentiable articulated rendering and the photometric articulation loss.

The scene is deformed, projected and rasterized in float64.  Deformation and
projection are plain torch ops; rasterization is a custom autograd function
around the compiled kernels, whose backward pass replays compositing in
reverse.  Depth order and footprints are decided on detached values, so a
splat culled in the forward pass receives no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..errors import DegenerateBlendError, DimensionError
from ..kinematics import DEGENERATE_DET
from ..losses import LossConfig, skin_entropy, ssim_torch
from ..scene import Camera, Image, JointSpec, JointType, Scene, quat_to_rotmat
from . import backend
from .core import LOW_PASS, RenderConfig, depth_order, footprint_radius, normalize_depth

DTYPE = torch.float64


class RasterizeFunction(torch.autograd.Function):
    @staticmethod
    def forward(ctx, mean2d, conics, colors, opacities, depths, radii, order, cam, cfg, kernels):
        args = [np.ascontiguousarray(t.detach().numpy()) for t in
                (mean2d, conics, colors, opacities, depths)]
        bg = np.asarray(cfg.background, dtype=np.float64)
        rgb, dsum, alpha, tbuf, off = kernels.rasterize_forward(
            *args, radii, order, cam.width, cam.height, bg, cfg.alpha_min,
            cfg.transmittance_stop)
        ctx.saved = (args, radii, order, cam.width, cam.height, bg, tbuf, off, kernels)
        return torch.from_numpy(rgb), torch.from_numpy(dsum), torch.from_numpy(alpha)

    @staticmethod
    def backward(ctx, g_rgb, g_dsum, g_alpha):
        args, radii, order, w, h, bg, tbuf, off, kernels = ctx.saved

        def grad_or_zero(g, shape):
            return np.zeros(shape) if g is None else np.ascontiguousarray(g.numpy())

        grads = kernels.rasterize_backward(
            *args, radii, order, w, h, bg, tbuf, off,
            grad_or_zero(g_rgb, (h, w, 3)), grad_or_zero(g_dsum, (h, w)),
            grad_or_zero(g_alpha, (h, w)))
        return tuple(torch.from_numpy(g) for g in grads) + (None,) * 5


class PolarFactor(torch.autograd.Function):
    """Orthonormal polar factor ``U V^T`` of a batch of 3x3 matrices."""

    @staticmethod
    def forward(ctx, A):
        U, S, Vh = torch.linalg.svd(A)
        ctx.save_for_backward(U, S, Vh)
        return U @ Vh

    @staticmethod
    def backward(ctx, G):
        U, S, Vh = ctx.saved_tensors
        H = U.transpose(-1, -2) @ G @ Vh.transpose(-1, -2)
        Y = (H - H.transpose(-1, -2)) / (S[..., :, None] + S[..., None, :])
        return U @ Y @ Vh


def _skew(u):
    z = torch.zeros((), dtype=u.dtype)
    return torch.stack([torch.stack([z, -u[2], u[1]]),
                        torch.stack([u[2], z, -u[0]]),
                        torch.stack([-u[1], u[0], z])])


def _homogeneous(R, t):
    top = torch.cat([R, t[:, None]], dim=1)
    return torch.cat([top, torch.tensor([[0.0, 0.0, 0.0, 1.0]], dtype=R.dtype)], dim=0)


def bone_transforms(axes, origins, joint_types, pose):
    """Torch twin of ``skeleton_transforms``; raw axes are normalized here."""
    eye = torch.eye(3, dtype=DTYPE)
    bones = [torch.eye(4, dtype=DTYPE)]
    for j, jt in enumerate(joint_types):
        u = axes[j] / torch.linalg.norm(axes[j])
        th = pose[j]
        if jt is JointType.REVOLUTE:
            K = _skew(u)
            R = eye + torch.sin(th) * K + (1.0 - torch.cos(th)) * (K @ K)
            bones.append(_homogeneous(R, origins[j] - R @ origins[j]))
        else:
            bones.append(_homogeneous(eye, th * u))
    return torch.stack(bones)


def deform(means, rotmats, skin_logits, bones):
    """Linear blend skinning of means and rotation matrices."""
    M = torch.einsum("nj,jab->nab", torch.softmax(skin_logits, dim=1), bones)
    A = M[:, :3, :3]
    if len(A) and float(torch.linalg.det(A.detach()).min()) <= DEGENERATE_DET:
        raise DegenerateBlendError("blended rotation block is singular")
    new_means = torch.einsum("nab,nb->na", A, means) + M[:, :3, 3]
    return new_means, PolarFactor.apply(A) @ rotmats


def project(means, rotmats, scales, cam: Camera, near):
    """Torch twin of ``project_arrays``; returns mean2d, cov2d, depth and a visibility mask."""
    W = torch.from_numpy(np.array(cam.rotation))
    pc = means @ W.T + torch.from_numpy(np.array(cam.extrinsics[:3, 3]))
    z = pc[:, 2]
    visible = (z > near).detach().numpy()
    zs = torch.where(torch.from_numpy(visible), z, torch.ones_like(z))
    x, y = pc[:, 0], pc[:, 1]
    mean2d = torch.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], dim=1)
    zero = torch.zeros_like(zs)
    J = torch.stack([torch.stack([cam.fx / zs, zero, -cam.fx * x / (zs * zs)], dim=1),
                     torch.stack([zero, cam.fy / zs, -cam.fy * y / (zs * zs)], dim=1)], dim=1)
    M = J @ W @ rotmats * scales[:, None, :]
    cov2d = M @ M.transpose(1, 2) + LOW_PASS * torch.eye(2, dtype=DTYPE)
    return mean2d, cov2d, z, visible


def conics_of(cov2d):
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    return torch.stack([c / det, -b / det, a / det], dim=1)


def render_tensors(means, rotmats, scales, colors, opacities, cam, cfg, kernels=None):
    """Rasterize already-deformed Gaussians; returns (rgb, depth_sum, alpha) tensors."""
    kernels = kernels or backend.kernels
    mean2d, cov2d, z, visible = project(means, rotmats, scales, cam, cfg.near)
    op_np = opacities.detach().numpy()
    radii = np.ascontiguousarray(footprint_radius(cov2d.detach().numpy(), op_np, cfg))
    order = depth_order(z.detach().numpy(), np.flatnonzero(visible & (radii > 0)))
    return RasterizeFunction.apply(mean2d, conics_of(cov2d), colors, opacities, z, radii,
                                   order, cam, cfg, kernels)


@dataclass
class JointParams:
    """Unconstrained joint parameters (axes need not be unit-norm)."""
    axes: np.ndarray
    origins: np.ndarray
    joint_types: tuple

    @classmethod
    def from_specs(cls, joints: Sequence[JointSpec]):
        if isinstance(joints, JointParams):
            return joints
        return cls(np.array([j.axis for j in joints], dtype=np.float64).reshape(-1, 3),
                   np.array([j.origin for j in joints], dtype=np.float64).reshape(-1, 3),
                   tuple(j.joint_type for j in joints))

    def to_specs(self):
        return [JointSpec.normalized(a, o, t)
                for a, o, t in zip(self.axes, self.origins, self.joint_types)]


@dataclass
class LossGradients:
    loss: float
    d_axis: np.ndarray
    d_origin: np.ndarray
    d_theta: np.ndarray
    d_skin_logits: np.ndarray


def _per_frame_cameras(cams, n_frames):
    cams = list(cams)
    if cams and isinstance(cams[0], Camera):
        return [cams] * n_frames
    if len(cams) != n_frames:
        raise DimensionError("need one camera group per frame")
    return [list(c) for c in cams]


class ArticulationProblem:
    """The articulation loss over a fixed canonical scene and an observation set.

    ``observed[t][v]`` is the image of frame ``t`` seen by camera ``v``;
    ``cams`` is either one camera list shared by every frame or one list per frame.
    """

    def __init__(self, scene: Scene, joint_types, cams, observed, loss_cfg=LossConfig(),
                 render_cfg=RenderConfig(), kernels=None):
        self.joint_types = tuple(JointType(t) for t in joint_types)
        if scene.part_count != len(self.joint_types):
            raise DimensionError("scene.part_count must equal the number of joints")
        self.n_frames = len(observed)
        self.cams = _per_frame_cameras(cams, self.n_frames)
        self.loss_cfg = loss_cfg
        self.render_cfg = render_cfg
        self.kernels = kernels
        self.means = torch.from_numpy(np.array(scene.means))
        self.rotmats = torch.from_numpy(quat_to_rotmat(scene.rotations).reshape(-1, 3, 3))
        self.scales = torch.from_numpy(np.array(scene.scales))
        self.colors = torch.from_numpy(np.array(scene.colors))
        self.opacities = torch.from_numpy(np.array(scene.opacities))
        self.targets = []
        for t, (frame, cams_t) in enumerate(zip(observed, self.cams)):
            if len(frame) != len(cams_t):
                raise DimensionError(f"frame {t} has {len(frame)} images for {len(cams_t)} cameras")
            views = []
            for img, cam in zip(frame, cams_t):
                if (img.height, img.width) != (cam.height, cam.width):
                    raise DimensionError("observed image size differs from its camera")
                depth = torch.from_numpy(np.array(img.depth))
                valid = depth > 0
                views.append((torch.from_numpy(np.array(img.rgb)), depth, valid,
                              max(1, int(valid.sum()))))
            self.targets.append(views)

    def _view_loss(self, rgb, dsum, alpha, target):
        obs_rgb, obs_depth, valid, n_valid = target
        cfg = self.loss_cfg
        loss = cfg.lambda_l1 * (rgb - obs_rgb).abs().mean()
        if cfg.lambda_ssim:
            loss = loss + cfg.lambda_ssim * (1.0 - ssim_torch(rgb, obs_rgb))
        if cfg.depth_weight:
            resid = torch.where(valid, (dsum - alpha * obs_depth).abs(), torch.zeros_like(dsum))
            loss = loss + cfg.depth_weight * resid.sum() / n_valid
        return loss

    def regularizer(self, axes, skin_logits):
        norms = torch.linalg.norm(axes, dim=1)
        reg = self.loss_cfg.lambda_unit * ((norms - 1.0) ** 2).sum()
        if self.loss_cfg.lambda_entropy:
            reg = reg + self.loss_cfg.lambda_entropy * skin_entropy(skin_logits)
        return reg

    def _check(self, axes, origins, thetas, skin_logits):
        K = len(self.joint_types)
        if axes.shape != (K, 3) or origins.shape != (K, 3):
            raise DimensionError("joint parameters must have shape (K, 3)")
        if thetas.shape != (self.n_frames, K):
            raise DimensionError(f"thetas must have shape ({self.n_frames}, {K})")
        if skin_logits.shape != (len(self.means), K + 1):
            raise DimensionError("skin_logits shape does not match the scene")

    def evaluate(self, joints, thetas, skin_logits, grad=True):
        """Loss and, when ``grad``, its gradients with respect to every parameter."""
        jp = JointParams.from_specs(joints)
        axes = torch.tensor(jp.axes, dtype=DTYPE, requires_grad=grad)
        origins = torch.tensor(jp.origins, dtype=DTYPE, requires_grad=grad)
        logits = torch.tensor(np.asarray(skin_logits), dtype=DTYPE, requires_grad=grad)
        thetas = np.asarray(thetas, dtype=np.float64).reshape(self.n_frames, -1)
        self._check(axes, origins, thetas, logits)
        d_theta = np.zeros_like(thetas)
        total = 0.0
        with torch.set_grad_enabled(grad):
            for t in range(self.n_frames):
                th = torch.tensor(thetas[t], dtype=DTYPE, requires_grad=grad)
                bones = bone_transforms(axes, origins, self.joint_types, th)
                means, rotmats = deform(self.means, self.rotmats, logits, bones)
                loss_t = 0.0
                for cam, target in zip(self.cams[t], self.targets[t]):
                    rgb, dsum, alpha = render_tensors(means, rotmats, self.scales, self.colors,
                                                      self.opacities, cam, self.render_cfg,
                                                      self.kernels)
                    loss_t = loss_t + self._view_loss(rgb, dsum, alpha, target)
                if grad and isinstance(loss_t, torch.Tensor) and loss_t.requires_grad:
                    loss_t.backward()
                    d_theta[t] = th.grad.numpy()
                total += float(loss_t.detach() if isinstance(loss_t, torch.Tensor) else loss_t)
            reg = self.regularizer(axes, logits)
            if grad:
                reg.backward()
            total += float(reg.detach())
        if not grad:
            return total, None

        def g(t):
            return np.zeros(tuple(t.shape)) if t.grad is None else t.grad.numpy().copy()

        return total, LossGradients(total, g(axes), g(origins), d_theta, g(logits))

    def loss(self, joints, thetas, skin_logits) -> float:
        return self.evaluate(joints, thetas, skin_logits, grad=False)[0]


def loss_gradients(scene: Scene, joints, poses, cams, observed, loss_cfg=LossConfig(),
                   render_cfg=RenderConfig(), skin_logits=None) -> LossGradients:
    """Articulation loss and its gradients for axes, origins, per-frame poses and skin logits."""
    poses = np.asarray(poses, dtype=np.float64)
    if len(poses) != len(observed):
        raise DimensionError("one pose per observed frame is required")
    jp = JointParams.from_specs(joints)
    problem = ArticulationProblem(scene, jp.joint_types, cams, observed, loss_cfg, render_cfg)
    logits = scene.skin_logits if skin_logits is None else skin_logits
    return problem.evaluate(jp, poses.reshape(len(observed), -1), logits)[1]


def render_image(scene: Scene, joints, pose, cam: Camera, cfg=RenderConfig()) -> Image:
    """Differentiable-path forward render, packaged like :func:`render`."""
    jp = JointParams.from_specs(joints)
    with torch.no_grad():
        bones = bone_transforms(torch.from_numpy(jp.axes), torch.from_numpy(jp.origins),
                                jp.joint_types, torch.as_tensor(np.asarray(pose, dtype=np.float64)))
        means, rotmats = deform(torch.from_numpy(np.array(scene.means)),
                                torch.from_numpy(quat_to_rotmat(scene.rotations).reshape(-1, 3, 3)),
                                torch.from_numpy(np.array(scene.skin_logits)), bones)
        rgb, dsum, alpha = render_tensors(
            means, rotmats, torch.from_numpy(np.array(scene.scales)),
            torch.from_numpy(np.array(scene.colors)), torch.from_numpy(np.array(scene.opacities)),
            cam, cfg)
    a = alpha.numpy()
    return Image(rgb.numpy(), normalize_depth(dsum.numpy(), a), a)
