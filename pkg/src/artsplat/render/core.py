"""Forward rendering of Gaussian scenes into RGB-D images."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError
from ..kinematics import deform_scene
from ..scene import Camera, GaussianSphere, Image, JointSpec, Scene, covariance_from_rs
from . import backend

LOW_PASS = 0.3
DEPTH_ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class RenderConfig:
    cutoff_sigma: float = 3.0
    alpha_min: float = 1.0 / 255.0
    transmittance_stop: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    near: float = 0.01

    def __post_init__(self):
        if self.cutoff_sigma < 1:
            raise ConfigurationError("cutoff_sigma must be at least 1")
        if not (self.alpha_min > 0 and self.transmittance_stop > 0 and self.near > 0):
            raise ConfigurationError("alpha_min, transmittance_stop and near must be positive")
        if len(self.background) != 3:
            raise ConfigurationError("background must be an RGB triple")


@dataclass(frozen=True)
class Projected2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    view_depth: float
    color: np.ndarray
    opacity: float


def _perspective_jacobian(pc, fx, fy):
    x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
    J = np.zeros(pc.shape[:-1] + (2, 3))
    J[..., 0, 0] = fx / z
    J[..., 0, 2] = -fx * x / (z * z)
    J[..., 1, 1] = fy / z
    J[..., 1, 2] = -fy * y / (z * z)
    return J


def project_arrays(means, rotations, scales, cam: Camera, near=0.01):
    """Batch projection. Returns ``(mean2d, cov2d, depth, visible)``."""
    W = cam.rotation
    pc = means @ W.T + cam.extrinsics[:3, 3]
    z = pc[:, 2]
    visible = z > near
    zs = np.where(visible, z, 1.0)
    pcs = np.column_stack([pc[:, 0], pc[:, 1], zs])
    mean2d = np.column_stack([cam.fx * pcs[:, 0] / zs + cam.cx, cam.fy * pcs[:, 1] / zs + cam.cy])
    J = _perspective_jacobian(pcs, cam.fx, cam.fy)
    sigma = covariance_from_rs(rotations, scales) if len(means) else np.zeros((0, 3, 3))
    JW = J @ W
    cov2d = JW @ sigma @ np.swapaxes(JW, -1, -2) + LOW_PASS * np.eye(2)
    return mean2d, cov2d, z, visible


def project_gaussian(g: GaussianSphere, cam: Camera, near=0.01) -> Optional[Projected2D]:
    """Project one Gaussian; ``None`` marks a culled (behind-camera) splat."""
    mean2d, cov2d, z, visible = project_arrays(g.mean[None], g.rotation[None],
                                               g.scale[None], cam, near)
    if not visible[0]:
        return None
    return Projected2D(mean2d[0], cov2d[0], float(z[0]), g.color.copy(), g.opacity)


def conic_from_cov2d(cov2d):
    a, b, c = cov2d[..., 0, 0], cov2d[..., 0, 1], cov2d[..., 1, 1]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], axis=-1)


def footprint_radius(cov2d, opacities, cfg: RenderConfig):
    """Pixel radius beyond which a splat's alpha is certainly below ``alpha_min``.

    The radius is the larger of ``cutoff_sigma`` standard deviations and the
    Mahalanobis distance at which ``opacity * exp(-d^2/2)`` falls to
    ``alpha_min``, so the cutoff never discards a contribution that the
    alpha threshold would keep.  Splats that can never reach ``alpha_min``
    get radius ``-1``.
    """
    a, b, c = cov2d[..., 0, 0], cov2d[..., 0, 1], cov2d[..., 1, 1]
    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    ratio = np.maximum(opacities / cfg.alpha_min, 1.0)
    k = np.maximum(cfg.cutoff_sigma, np.sqrt(2.0 * np.log(ratio)))
    r = np.sqrt(lam) * k * (1.0 + 1e-9) + 1e-9
    return np.where(opacities >= cfg.alpha_min, r, -1.0)


def depth_order(depths, candidates):
    """Front-to-back order of the candidate indices (stable on ties)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    return candidates[np.argsort(depths[candidates], kind="stable")].astype(np.int64)


def rasterize(mean2d, conics, colors, opacities, depths, radii, order, cam, cfg, kernels=None):
    kernels = kernels or backend.kernels
    return kernels.rasterize_forward(
        np.ascontiguousarray(mean2d, dtype=np.float64),
        np.ascontiguousarray(conics, dtype=np.float64),
        np.ascontiguousarray(colors, dtype=np.float64),
        np.ascontiguousarray(opacities, dtype=np.float64),
        np.ascontiguousarray(depths, dtype=np.float64),
        np.ascontiguousarray(radii, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        int(cam.width), int(cam.height),
        np.asarray(cfg.background, dtype=np.float64), float(cfg.alpha_min),
        float(cfg.transmittance_stop))


def normalize_depth(dsum, alpha):
    return np.where(alpha > DEPTH_ALPHA_FLOOR, dsum / np.maximum(alpha, DEPTH_ALPHA_FLOOR), 0.0)


def _check_camera(cam):
    if cam.width <= 0 or cam.height <= 0:
        raise ConfigurationError("camera resolution must be positive")


def render(scene: Scene, cam: Camera, cfg: RenderConfig = RenderConfig(), kernels=None) -> Image:
    _check_camera(cam)
    mean2d, cov2d, z, visible = project_arrays(scene.means, scene.rotations, scene.scales,
                                               cam, cfg.near)
    radii = footprint_radius(cov2d, scene.opacities, cfg)
    order = depth_order(z, np.flatnonzero(visible & (radii > 0)))
    conics = conic_from_cov2d(cov2d) if len(scene) else np.zeros((0, 3))
    rgb, dsum, alpha, _, _ = rasterize(mean2d, conics, scene.colors, scene.opacities, z, radii,
                                       order, cam, cfg, kernels)
    return Image(rgb, normalize_depth(dsum, alpha), alpha)


def render_articulated(scene: Scene, joints: Sequence[JointSpec], pose, cam: Camera,
                       cfg: RenderConfig = RenderConfig()) -> Image:
    return render(deform_scene(scene, joints, pose), cam, cfg)


def composite_pixel(contributions, background=(0.0, 0.0, 0.0), transmittance_stop=1e-4):
    """Front-to-back compositing of ``(color, alpha)`` pairs sorted near to far.

    Returns ``(rgb, accumulated_alpha)``.
    """
    C = np.zeros(3)
    T = 1.0
    for color, alpha in contributions:
        C += np.asarray(color, dtype=np.float64) * (alpha * T)
        T *= 1.0 - alpha
        if T < transmittance_stop:
            break
    return C + T * np.asarray(background, dtype=np.float64), 1.0 - T
