"""Geometric joint initialization from 2D part annotations and a depth map.

Annotations stand in for a vision-language model's answers: a part bounding
box, a joint type and, for revolute parts, two pixels on the hinge line.
``synthesize_annotations`` produces them from ground truth with noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (ArtsplatError, ConfigurationError, DegenerateGeometryError,
                     InsufficientDepthError, InvalidInputError, NoDepthError, PartError,
                     VisibilityError)
from .scene import Camera, Image, JointSpec, JointType, Scene

MIN_EIGENVALUE = 1e-10
MIN_CROSS = 1e-6
OUTLIER_FACTOR = 3.0
OUTLIER_FLOOR = 1e-3   # meters


@dataclass(frozen=True)
class PartAnnotation:
    bbox: tuple                 # ((x1, y1), (x2, y2))
    joint_type: JointType
    vertices: Optional[tuple] = None  # (x1, y1, x2, y2) on the joint line
    handle_bbox: Optional[tuple] = None

    def __post_init__(self):
        (x1, y1), (x2, y2) = self.bbox
        if not (x1 < x2 and y1 < y2):
            raise InvalidInputError("bbox corners must be ordered top-left, bottom-right")
        object.__setattr__(self, "bbox", ((float(x1), float(y1)), (float(x2), float(y2))))
        object.__setattr__(self, "joint_type", JointType(self.joint_type))
        if self.vertices is not None:
            object.__setattr__(self, "vertices", tuple(float(v) for v in self.vertices))

    def to_dict(self):
        d = {"bbox": [list(self.bbox[0]), list(self.bbox[1])],
             "joint_type": self.joint_type.value}
        if self.vertices is not None:
            d["vertices"] = list(self.vertices)
        if self.handle_bbox is not None:
            d["handle_bbox"] = [list(self.handle_bbox[0]), list(self.handle_bbox[1])]
        return d

    @classmethod
    def from_dict(cls, d):
        hb = d.get("handle_bbox")
        return cls(tuple(map(tuple, d["bbox"])), d["joint_type"], d.get("vertices"),
                   tuple(map(tuple, hb)) if hb is not None else None)


@dataclass(frozen=True)
class AnnotationSet:
    image: str
    depth: str
    camera: str
    parts: tuple
    noise: dict = field(default_factory=dict)

    def to_dict(self):
        return {"image": self.image, "depth": self.depth, "camera": self.camera,
                "parts": [p.to_dict() for p in self.parts], "noise": dict(self.noise)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("image", ""), d.get("depth", ""), d.get("camera", ""),
                   tuple(PartAnnotation.from_dict(p) for p in d["parts"]),
                   dict(d.get("noise", {})))


def _depth_array(depth_map):
    return np.asarray(getattr(depth_map, "depth", depth_map), dtype=np.float64)


def _lookup(pixel, depth, cam):
    ix, iy = int(np.floor(pixel[0] + 0.5)), int(np.floor(pixel[1] + 0.5))
    if not (0 <= ix < cam.width and 0 <= iy < cam.height):
        raise InvalidInputError(f"pixel {tuple(pixel)} outside the image")
    z = depth[iy, ix]
    if not (np.isfinite(z) and z > 0):
        raise NoDepthError(f"no depth at pixel {tuple(pixel)}")
    return z


def unproject(pixel, depth_map, cam: Camera):
    """World point seen at a (sub-)pixel; depth is read at the nearest pixel."""
    px, py = float(pixel[0]), float(pixel[1])
    z = _lookup((px, py), _depth_array(depth_map), cam)
    pc = np.array([z * (px - cam.cx) / cam.fx, z * (py - cam.cy) / cam.fy, z])
    R = cam.rotation
    return R.T @ (pc - cam.extrinsics[:3, 3])


def _valid_points(pixels, depth_map, cam):
    depth = _depth_array(depth_map)
    pts = []
    for p in pixels:
        try:
            pts.append(unproject(p, depth, cam))
        except (NoDepthError, InvalidInputError):
            continue
    return np.array(pts).reshape(-1, 3)


def _fix_sign(u):
    return u if u[np.argmax(np.abs(u))] > 0 else -u


def principal_axes(points):
    """Eigenvalues (descending) and eigenvectors (columns) of the point covariance."""
    X = points - points.mean(axis=0)
    w, V = np.linalg.eigh(X.T @ X / len(points))
    return w[::-1], V[:, ::-1]


def estimate_revolute(p1_px, p2_px, depth_map, cam: Camera, n_samples=32, tau_lo=0.01):
    """Axis and origin of a hinge line from two annotated pixels on it."""
    if n_samples < 3:
        raise InvalidInputError("n_samples must be at least 3")
    p1 = np.asarray(p1_px, dtype=np.float64)
    p2 = np.asarray(p2_px, dtype=np.float64)
    s = np.linspace(0.0, 1.0, n_samples)[:, None]
    pts = _valid_points(p1 * (1 - s) + p2 * s, depth_map, cam)
    if len(pts) < 3:
        raise InsufficientDepthError(f"only {len(pts)} samples with valid depth")
    lam, V = principal_axes(pts)
    if lam[0] < MIN_EIGENVALUE:
        raise DegenerateGeometryError("sampled points have no spread")
    # Components below tau_lo * lambda_1 are noise; the first one always survives.
    retained = V[:, lam >= tau_lo * lam[0]]
    return _fix_sign(retained[:, 0]), pts.mean(axis=0)


def _midline_pixels(bbox):
    (x1, y1), (x2, y2) = bbox
    if x2 - x1 < 2 or y2 - y1 < 2:
        raise DegenerateGeometryError("bbox narrower than 2 pixels")
    xs = np.arange(np.ceil(x1), np.floor(x2) + 1)
    ys = np.arange(np.ceil(y1), np.floor(y2) + 1)
    ym, xm = 0.5 * (y1 + y2), 0.5 * (x1 + x2)
    return np.column_stack([xs, np.full_like(xs, ym)]), np.column_stack([np.full_like(ys, xm), ys])


def _line_direction(pts):
    """Principal direction of the points along a mid-line, ignoring off-line outliers.

    Handles and other parts sticking out of the face would tilt a plain PCA
    fit toward the camera.  The line through the pair of points with the
    least median residual picks the inliers, which PCA then refits.
    """
    lam, V = principal_axes(pts)
    if lam[0] < MIN_EIGENVALUE:
        raise DegenerateGeometryError("bbox mid-line points have no spread")
    i, j = np.triu_indices(len(pts), k=1)
    dirs = pts[j] - pts[i]
    norms = np.linalg.norm(dirs, axis=1)
    ok = norms > 1e-9
    if not ok.any():
        return V[:, 0]
    i, dirs = i[ok], dirs[ok] / norms[ok, None]
    rel = pts[None, :, :] - pts[i][:, None, :]
    along = np.einsum("pnk,pk->pn", rel, dirs)
    resid = np.linalg.norm(rel - along[..., None] * dirs[:, None, :], axis=2)
    med = np.median(resid, axis=1)
    best = int(np.argmin(med))
    keep = resid[best] <= max(OUTLIER_FACTOR * med[best], OUTLIER_FLOOR)
    if keep.sum() < 2:
        return V[:, 0]
    lam, V = principal_axes(pts[keep])
    return V[:, 0] if lam[0] >= MIN_EIGENVALUE else dirs[best]


def prismatic_directions(bbox, depth_map, cam: Camera):
    """Directions of the world points under the bbox's horizontal and vertical mid-lines."""
    dirs = []
    for pixels in _midline_pixels(bbox):
        pts = _valid_points(pixels, depth_map, cam)
        if len(pts) < 2:
            raise InsufficientDepthError("bbox mid-line has fewer than 2 valid depth pixels")
        dirs.append(_line_direction(pts))
    return dirs[0], dirs[1]


def estimate_prismatic(bbox, depth_map, cam: Camera):
    """Sliding direction as the normal of the annotated face, pointing toward the camera."""
    d_h, d_v = prismatic_directions(bbox, depth_map, cam)
    n = np.cross(d_h, d_v)
    norm = np.linalg.norm(n)
    if norm < MIN_CROSS:
        raise DegenerateGeometryError("mid-line directions are parallel")
    n /= norm
    return -n if n @ cam.forward > 0 else n


def init_joints(annotations: AnnotationSet, depth_map, cam: Camera) -> list:
    joints = []
    for i, part in enumerate(annotations.parts):
        try:
            if part.joint_type is JointType.REVOLUTE:
                if part.vertices is None:
                    raise InvalidInputError("revolute part needs hinge vertices")
                v = part.vertices
                axis, origin = estimate_revolute(v[:2], v[2:], depth_map, cam)
            else:
                axis = estimate_prismatic(part.bbox, depth_map, cam)
                (x1, y1), (x2, y2) = part.bbox
                origin = unproject((0.5 * (x1 + x2), 0.5 * (y1 + y2)), depth_map, cam)
            joints.append(JointSpec.normalized(axis, origin, part.joint_type))
        except ArtsplatError as exc:
            raise PartError(i, exc) from exc
    return joints


# ------------------------------------------------------------ synthesis

@dataclass(frozen=True)
class NoiseConfig:
    """Annotation noise: per-vertex/corner pixel jitter and hinge-line rotation."""
    pixel_sigma: float = 3.0
    angle_sigma_deg: float = 20.0
    bbox_sigma: float = 3.0
    hinge_inset: float = 0.1

    @classmethod
    def preset(cls, name):
        if name in ("none", "zero", "noiseless"):
            return cls(0.0, 0.0, 0.0)
        if name == "default":
            return cls()
        raise ConfigurationError(f"unknown noise preset {name!r}")

    def to_dict(self):
        return dict(self.__dict__)


def _clip_segment(a, b, width, height):
    """Liang-Barsky clip of segment a-b to the pixel rectangle; None if outside."""
    lo, hi = 0.0, 1.0
    d = b - a
    for p, q in ((-d[0], a[0]), (d[0], width - 1 - a[0]), (-d[1], a[1]),
                 (d[1], height - 1 - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
    if lo > hi:
        return None
    return a + lo * d, a + hi * d


def _part_mask(gt_scene, k):
    return gt_scene.part_labels() == k + 1


def hinge_segment(gt_scene: Scene, joint: JointSpec, k, inset=0.1):
    """World end points of the joint line spanned by part ``k``'s Gaussians."""
    pts = gt_scene.means[_part_mask(gt_scene, k)]
    t = (pts - joint.origin) @ joint.axis
    lo, hi = t.min(), t.max()
    span = hi - lo
    lo, hi = lo + inset * span, hi - inset * span
    foot = joint.origin
    return foot + lo * joint.axis, foot + hi * joint.axis


def synthesize_annotations(gt_scene: Scene, gt_joints: Sequence[JointSpec], cam: Camera,
                           noise_cfg: NoiseConfig = NoiseConfig(), seed=0,
                           handle_points=None) -> AnnotationSet:
    rng = np.random.default_rng(seed)
    parts = []
    for k, joint in enumerate(gt_joints):
        mask = _part_mask(gt_scene, k)
        if not np.any(mask):
            raise VisibilityError(f"part {k} has no Gaussians")
        uv, z = cam.project(gt_scene.means[mask])
        if np.any(z <= 0):
            raise VisibilityError(f"part {k} is partly behind the camera")
        corners = np.array([uv.min(axis=0), uv.max(axis=0)])
        corners = corners + rng.normal(0.0, noise_cfg.bbox_sigma, size=(2, 2))
        lo = np.clip(corners.min(axis=0), 0, [cam.width - 1, cam.height - 1])
        hi = np.clip(corners.max(axis=0), 0, [cam.width - 1, cam.height - 1])
        if np.any(hi - lo < 2):
            raise VisibilityError(f"part {k} bounding box leaves the image")
        bbox = ((lo[0], lo[1]), (hi[0], hi[1]))
        vertices = None
        if joint.is_revolute:
            a3, b3 = hinge_segment(gt_scene, joint, k, noise_cfg.hinge_inset)
            (a, b), _ = cam.project(np.array([a3, b3]))
            mid = 0.5 * (a + b)
            ang = np.radians(rng.normal(0.0, noise_cfg.angle_sigma_deg))
            rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
            a = mid + rot @ (a - mid) + rng.normal(0.0, noise_cfg.pixel_sigma, 2)
            b = mid + rot @ (b - mid) + rng.normal(0.0, noise_cfg.pixel_sigma, 2)
            seg = _clip_segment(a, b, cam.width, cam.height)
            if seg is None or np.linalg.norm(seg[1] - seg[0]) < 2:
                raise VisibilityError(f"joint line of part {k} is outside the image")
            vertices = (*seg[0], *seg[1])
        handle_bbox = None
        if handle_points is not None and handle_points[k] is not None:
            (h,), _ = cam.project(np.asarray(handle_points[k])[None])
            handle_bbox = ((h[0] - 2, h[1] - 2), (h[0] + 2, h[1] + 2))
        parts.append(PartAnnotation(bbox, joint.joint_type, vertices, handle_bbox))
    return AnnotationSet("", "", "", tuple(parts), noise_cfg.to_dict())
