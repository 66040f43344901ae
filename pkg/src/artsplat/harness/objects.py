"""Procedural articulated objects built directly from Gaussians.

World frame: z up, object fronts face -y with the front plane at y = 0.
Every movable part is positioned so that a positive joint value opens it
toward the viewer.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..scene import JointSpec, Scene, rotmat_to_quat

ONE_HOT_LOGIT = 30.0
SPACING = 0.03
THICKNESS = 0.002


class Template(str, enum.Enum):
    DOOR = "door"
    DRAWER = "drawer"
    CABINET2PART = "cabinet2part"
    MICROWAVE = "microwave"

    @classmethod
    def parse(cls, name):
        key = str(getattr(name, "value", name)).lower().replace("_", "").replace("-", "")
        for t in cls:
            if t.value == key:
                return t
        raise ConfigurationError(f"unknown object template {name!r}")


@dataclass
class ArticulatedObject:
    template: Template
    scene: Scene
    joints: list
    grasp_points: list
    target_deltas: list
    upper_limits: list
    center: np.ndarray
    scale: float
    front_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))

    def __iter__(self):
        return iter((self.scene, self.joints, self.grasp_points))


class _Builder:
    """Accumulates Gaussian slabs, each tagged with the bone (0 = base) it belongs to."""

    def __init__(self, rng, n_parts):
        self.rng = rng
        self.n_parts = n_parts
        self.chunks = []

    def plane(self, origin, du, dv, size_u, size_v, bone, color, texture=0.12, hole=None,
              opacity=0.99, spacing=SPACING):
        """Grid of flat splats spanning ``origin + a*du + b*dv`` for a, b in [0, size]."""
        du = np.asarray(du, dtype=np.float64)
        dv = np.asarray(dv, dtype=np.float64)
        nu = max(2, int(round(size_u / spacing)) + 1)
        nv = max(2, int(round(size_v / spacing)) + 1)
        a, b = np.meshgrid(np.linspace(0, size_u, nu), np.linspace(0, size_v, nv), indexing="ij")
        a, b = a.ravel(), b.ravel()
        if hole is not None:
            (a0, a1), (b0, b1) = hole
            keep = ~((a > a0) & (a < a1) & (b > b0) & (b < b1))
            a, b = a[keep], b[keep]
        means = np.asarray(origin) + a[:, None] * du + b[:, None] * dv
        normal = np.cross(du, dv)
        R = np.stack([du, dv, normal], axis=1)
        step_u = size_u / (nu - 1)
        step_v = size_v / (nv - 1)
        scales = np.tile([0.75 * step_u, 0.75 * step_v, THICKNESS], (len(means), 1))
        # smooth two-scale pattern plus per-splat jitter gives the surfaces photometric texture
        phase = self.rng.uniform(0, 2 * np.pi, 4)
        freq = self.rng.uniform(6.0, 14.0, 2)
        pattern = (np.sin(freq[0] * a + phase[0]) * np.cos(freq[1] * b + phase[1])
                   + 0.5 * np.sin(2.3 * freq[1] * a + phase[2] + 1.7 * freq[0] * b))
        shade = texture * pattern[:, None] + self.rng.normal(0, 0.03, (len(means), 3))
        colors = np.clip(np.asarray(color) + shade, 0.02, 0.98)
        self._add(means, np.repeat(rotmat_to_quat(R)[None], len(means), 0), scales,
                  np.full(len(means), opacity), colors, bone)

    def box_cluster(self, center, size, bone, color, spacing=0.012):
        """Small solid block of splats (handles)."""
        axes = [np.arange(-s / 2, s / 2 + 1e-9, spacing) for s in size]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        means = np.asarray(center) + g
        scales = np.full((len(means), 3), 0.6 * spacing)
        colors = np.clip(np.asarray(color) + self.rng.normal(0, 0.03, (len(means), 3)), 0, 1)
        quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(means), 1))
        self._add(means, quats, scales, np.full(len(means), 0.95), colors, bone)

    def _add(self, means, quats, scales, opacities, colors, bone):
        logits = np.zeros((len(means), self.n_parts + 1))
        logits[:, bone] = ONE_HOT_LOGIT
        self.chunks.append((means, quats, scales, opacities, colors, logits))

    def scene(self):
        cols = [np.concatenate(c) for c in zip(*self.chunks)]
        return Scene(*cols, part_count=self.n_parts)


def _color(rng, base, spread=0.12):
    return np.clip(np.asarray(base) + rng.uniform(-spread, spread, 3), 0.05, 0.95)


X, Z, Y = np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), np.array([0, 1.0, 0])


def _front_ring(b, x0, z0, w, h, border, bone, color, hole):
    """Front frame plane with the given opening cut out."""
    b.plane([x0 - border, 0.0, z0 - border], X, Z, w + 2 * border, h + 2 * border, bone, color,
            hole=((border - 1e-6, border + w + 1e-6), (border - 1e-6, border + h + 1e-6)))


def _hinged_panel(b, rng, x0, z0, w, h, bone, color, depth, back_color, handle_color):
    """Door panel flush with the front plane, hinged on its left edge, plus the cavity behind."""
    b.plane([x0, 0.0, z0], X, Z, w, h, bone, color)
    b.plane([x0, depth, z0], X, Z, w, h, 0, back_color, texture=0.08)
    handle = np.array([x0 + 0.85 * w, -0.025, z0 + 0.5 * h])
    b.box_cluster(handle, (0.03, 0.04, 0.10), bone, handle_color)
    joint = JointSpec([0.0, 0.0, -1.0], [x0, 0.0, z0 + 0.5 * h], "revolute")
    return joint, handle


def _drawer(b, rng, x0, z0, w, h, bone, color, depth, handle_color, inner_color):
    """Drawer front flush with the front plane plus its box extending into the body."""
    b.plane([x0, 0.0, z0], X, Z, w, h, bone, color)
    b.plane([x0, 0.0, z0 + 0.02], Y, X, depth, w, bone, inner_color, texture=0.06)  # bottom
    b.plane([x0 + 0.01, 0.0, z0], Y, Z, depth, h - 0.02, bone, inner_color, texture=0.06)
    b.plane([x0 + w - 0.01, 0.0, z0], Z, Y, h - 0.02, depth, bone, inner_color, texture=0.06)
    handle = np.array([x0 + 0.5 * w, -0.025, z0 + 0.65 * h])
    b.box_cluster(handle, (0.12, 0.04, 0.03), bone, handle_color)
    joint = JointSpec([0.0, -1.0, 0.0], [x0 + 0.5 * w, 0.0, z0 + 0.5 * h], "prismatic")
    return joint, handle


def _door(rng):
    b = _Builder(rng, 1)
    w, h = rng.uniform(0.5, 0.62), rng.uniform(0.8, 0.95)
    border = rng.uniform(0.08, 0.12)
    x0, z0 = -w / 2, -h / 2
    _front_ring(b, x0, z0, w, h, border, 0, _color(rng, [0.55, 0.45, 0.35]), None)
    joint, handle = _hinged_panel(b, rng, x0, z0, w, h, 1, _color(rng, [0.75, 0.7, 0.55]),
                                  rng.uniform(0.3, 0.4), _color(rng, [0.18, 0.2, 0.22], 0.05),
                                  _color(rng, [0.15, 0.25, 0.7]))
    return b, [joint], [handle], [np.radians(60.0)], [np.radians(100.0)], max(w, h) + 2 * border


def _drawer_object(rng):
    b = _Builder(rng, 1)
    w, h = rng.uniform(0.55, 0.7), rng.uniform(0.25, 0.32)
    border = rng.uniform(0.08, 0.12)
    depth = rng.uniform(0.3, 0.38)
    x0, z0 = -w / 2, -h / 2
    body = _color(rng, [0.5, 0.5, 0.55])
    # body around the drawer: tall front plate with the opening cut out
    b.plane([x0 - border, 0.0, z0 - 2 * border], X, Z, w + 2 * border, h + 4 * border, 0, body,
            hole=((border - 1e-6, border + w + 1e-6), (2 * border - 1e-6, 2 * border + h + 1e-6)))
    b.plane([x0, depth + 0.03, z0], X, Z, w, h, 0, _color(rng, [0.15, 0.15, 0.18], 0.05))
    joint, handle = _drawer(b, rng, x0, z0, w, h, 1, _color(rng, [0.7, 0.55, 0.4]), depth,
                            _color(rng, [0.7, 0.2, 0.15]), _color(rng, [0.6, 0.5, 0.4]))
    size = max(w + 2 * border, h + 4 * border)
    return b, [joint], [handle], [0.2], [depth], size


def _cabinet(rng):
    b = _Builder(rng, 2)
    w = rng.uniform(0.5, 0.6)
    hd, hr = rng.uniform(0.45, 0.55), rng.uniform(0.22, 0.28)
    gap, border = 0.06, rng.uniform(0.07, 0.1)
    depth = rng.uniform(0.3, 0.36)
    x0 = -w / 2
    z_drawer = -(hd + hr + gap) / 2
    z_door = z_drawer + hr + gap
    body = _color(rng, [0.45, 0.5, 0.45])
    total_h = hd + hr + gap
    # front plate: two openings
    b.plane([x0 - border, 0.0, z_drawer - border], X, Z, w + 2 * border, total_h + 2 * border, 0,
            body, hole=((border - 1e-6, border + w + 1e-6),
                        (border - 1e-6, border + total_h + 1e-6)))
    b.plane([x0, 0.0, z_drawer + hr + 0.005], X, Z, w, gap - 0.01, 0, body)  # divider strip
    b.plane([x0, depth + 0.03, z_drawer], X, Z, w, hr, 0, _color(rng, [0.15, 0.15, 0.18], 0.05))
    door, door_handle = _hinged_panel(b, rng, x0, z_door, w, hd, 1,
                                      _color(rng, [0.75, 0.65, 0.5]), depth,
                                      _color(rng, [0.2, 0.18, 0.2], 0.05),
                                      _color(rng, [0.2, 0.3, 0.75]))
    drawer, drawer_handle = _drawer(b, rng, x0, z_drawer, w, hr, 2,
                                    _color(rng, [0.7, 0.5, 0.45]), depth,
                                    _color(rng, [0.75, 0.25, 0.2]), _color(rng, [0.6, 0.5, 0.4]))
    return (b, [door, drawer], [door_handle, drawer_handle], [np.radians(60.0), 0.2],
            [np.radians(100.0), depth], max(w, total_h) + 2 * border)


def _microwave(rng):
    b = _Builder(rng, 1)
    w, h = rng.uniform(0.45, 0.55), rng.uniform(0.3, 0.36)
    panel = rng.uniform(0.14, 0.18)
    border = 0.05
    x0, z0 = -(w + panel) / 2, -h / 2
    body = _color(rng, [0.8, 0.8, 0.82], 0.08)
    b.plane([x0 - border, 0.0, z0 - border], X, Z, w + panel + 2 * border, h + 2 * border, 0,
            body, hole=((border - 1e-6, border + w + 1e-6), (border - 1e-6, border + h + 1e-6)))
    b.plane([x0 + w + 0.02, -0.001, z0 + 0.03], X, Z, panel - 0.04, h - 0.06, 0,
            _color(rng, [0.25, 0.25, 0.3], 0.05))  # control panel
    joint, handle = _hinged_panel(b, rng, x0, z0, w, h, 1, _color(rng, [0.35, 0.35, 0.4], 0.08),
                                  rng.uniform(0.25, 0.3), _color(rng, [0.85, 0.75, 0.5], 0.05),
                                  _color(rng, [0.9, 0.9, 0.9], 0.05))
    return b, [joint], [handle], [np.radians(60.0)], [np.radians(100.0)], w + panel + 2 * border


_BUILDERS = {Template.DOOR: _door, Template.DRAWER: _drawer_object,
             Template.CABINET2PART: _cabinet, Template.MICROWAVE: _microwave}


def generate_object(template, seed) -> ArticulatedObject:
    """Deterministic procedural object; iterating yields ``(scene, joints, grasp_points)``."""
    t = Template.parse(template)
    rng = np.random.default_rng([int(seed), list(Template).index(t)])
    b, joints, grasps, targets, limits, size = _BUILDERS[t](rng)
    scene = b.scene()
    return ArticulatedObject(t, scene, joints, grasps, targets, limits,
                             center=np.zeros(3), scale=float(size))
