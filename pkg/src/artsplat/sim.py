"""Impedance-controlled manipulation of a ground-truth articulated object.

The object is kinematic: every control step the end-effector position is
projected onto the motion set of the true joint (an arc or a line through
the grasp point), the projection parameter becomes the joint state, and the
projection residual pushes back on the end-effector as a spring force.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateGraspError, ParameterError
from .imageio import load_image_gsim, save_image_gsim, write_pgm_depth, write_ppm
from .kinematics import revolute_transform
from .render.core import RenderConfig, render_articulated
from .scene import Camera, Image, JointSpec, Scene, dump_json, load_json, se3_apply

MIN_GRASP_RADIUS = 1e-6


def _as_matrix(v, name):
    m = np.asarray(v, dtype=np.float64)
    if m.ndim == 0:
        m = m * np.eye(3)
    elif m.shape == (3,):
        m = np.diag(m)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ParameterError(f"{name} must be a scalar, 3-vector or 3x3 matrix")
    return m


@dataclass(frozen=True)
class ImpedanceParams:
    M: object = 1.0
    D: object = 40.0
    K: object = 400.0
    dt: float = 1e-3

    def __post_init__(self):
        for name in ("M", "D", "K"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        sym = lambda a: 0.5 * (a + a.T)  # noqa: E731
        if np.min(np.linalg.eigvalsh(sym(self.M))) <= 0:
            raise ParameterError("inertia M must be positive definite")
        if np.min(np.linalg.eigvalsh(sym(self.K))) <= 0:
            raise ParameterError("stiffness K must be positive definite")
        if np.min(np.linalg.eigvalsh(sym(self.D))) < -1e-12:
            raise ParameterError("damping D must be positive semi-definite")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")

    def to_dict(self):
        return {"M": self.M.tolist(), "D": self.D.tolist(), "K": self.K.tolist(), "dt": self.dt}


@dataclass(frozen=True)
class EEState:
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray

    @classmethod
    def at_rest(cls, x):
        return cls(np.asarray(x, dtype=np.float64), np.zeros(3), np.zeros(3))


def impedance_step(state: EEState, x_d, v_d, a_d, f_ext, p: ImpedanceParams) -> EEState:
    """One semi-implicit Euler step of M(a-a_d) + D(v-v_d) + K(x-x_d) = F_ext."""
    rhs = (np.asarray(f_ext, dtype=np.float64) - p.D @ (state.v - v_d) - p.K @ (state.x - x_d))
    try:
        a = np.asarray(a_d, dtype=np.float64) + np.linalg.solve(p.M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("inertia matrix is singular") from exc
    v = state.v + a * p.dt
    return EEState(state.x + v * p.dt, v, a)


def passive_energy(state: EEState, x_d, p: ImpedanceParams):
    e = state.x - x_d
    return 0.5 * state.v @ p.M @ state.v + 0.5 * e @ p.K @ e


def joint_motion(joint: JointSpec, point, value):
    """Where ``point`` goes when ``joint`` moves by ``value``."""
    if joint.is_revolute:
        return se3_apply(revolute_transform(joint, value), point)
    return np.asarray(point, dtype=np.float64) + value * joint.axis


def _check_grasp(joint, grasp):
    if joint.is_revolute:
        r = grasp - joint.origin
        if np.linalg.norm(r - (r @ joint.axis) * joint.axis) <= MIN_GRASP_RADIUS:
            raise DegenerateGraspError("grasp point lies on the joint axis")


def opening_sign(joint: JointSpec, grasp, pull_direction):
    """+1 or -1 so that a positive command moves the grasp along ``pull_direction``."""
    if pull_direction is None:
        return 1.0
    h = 1e-4
    step = joint_motion(joint, grasp, h) - joint_motion(joint, grasp, -h)
    return 1.0 if step @ np.asarray(pull_direction) >= 0 else -1.0


def plan_trajectory(joint: JointSpec, grasp_point, target_delta, n_waypoints, duration=2.0):
    """Waypoints (x_d, v_d, a_d) uniform in the joint value from 0 to ``target_delta``."""
    if n_waypoints < 2:
        raise ConfigurationError("need at least 2 waypoints")
    grasp = np.asarray(grasp_point, dtype=np.float64)
    _check_grasp(joint, grasp)
    s = np.linspace(0.0, 1.0, n_waypoints)
    x = np.array([joint_motion(joint, grasp, si * target_delta) for si in s])
    h = duration / (n_waypoints - 1)
    v = np.gradient(x, h, axis=0)
    a = np.gradient(v, h, axis=0)
    return [(x[i], v[i], a[i]) for i in range(n_waypoints)]


def project_to_joint(joint: JointSpec, grasp, x):
    """Joint value whose motion of ``grasp`` comes closest to ``x``."""
    if joint.is_revolute:
        u, q = joint.axis, joint.origin
        r0 = grasp - q
        r = x - q
        r0p = r0 - (r0 @ u) * u
        rp = r - (r @ u) * u
        return float(np.arctan2(u @ np.cross(r0p, rp), r0p @ rp))
    return float((x - grasp) @ joint.axis)


@dataclass
class Frame:
    time: float
    theta: np.ndarray          # ground truth, kept out of the optimizer's inputs
    images: list
    commanded: float = 0.0     # planned joint value at this time, in the planned joint's sign


@dataclass
class ObservationSequence:
    frames: list
    cameras: list
    part_index: int = 0
    broken: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def observed(self):
        return [f.images for f in self.frames]

    @property
    def times(self):
        return np.array([f.time for f in self.frames])

    @property
    def commanded(self):
        return np.array([f.commanded for f in self.frames])

    @property
    def gt_thetas(self):
        return np.array([f.theta for f in self.frames])


@dataclass(frozen=True)
class SimConfig:
    duration: float = 2.0
    settle: float = 0.5
    r_break: float = 0.03
    k_contact: float = 400.0
    lower_limit: float = 0.0
    upper_limit: float = np.inf


def simulate_interaction(gt_scene: Scene, gt_joints: Sequence[JointSpec], part_index: int,
                         target_delta: float, cameras: Sequence[Camera], n_frames: int,
                         impedance: ImpedanceParams, planned_joint: JointSpec, grasp_point,
                         sim_cfg: SimConfig = SimConfig(), render_cfg: RenderConfig = RenderConfig(),
                         pull_direction=None):
    """Track a plan made with ``planned_joint`` while the object obeys the true joint.

    Returns ``(ObservationSequence, achieved_delta)``.
    """
    if not cameras:
        raise ConfigurationError("at least one camera is required")
    if not 0 <= part_index < len(gt_joints):
        raise ConfigurationError("part_index out of range")
    if n_frames < 1:
        raise ConfigurationError("n_frames must be positive")
    true_joint = gt_joints[part_index]
    grasp = np.asarray(grasp_point, dtype=np.float64)
    sign = opening_sign(planned_joint, grasp, pull_direction)
    n_move = int(round(sim_cfg.duration / impedance.dt))
    n_settle = int(round(sim_cfg.settle / impedance.dt))
    plan = plan_trajectory(planned_joint, grasp, sign * target_delta, n_move + 1,
                           sim_cfg.duration)
    hold = (plan[-1][0], np.zeros(3), np.zeros(3))

    state = EEState.at_rest(grasp)
    theta = 0.0
    thetas = [0.0]
    commands = [0.0]
    broken = False
    f_ext = np.zeros(3)
    for step in range(1, n_move + n_settle + 1):
        x_d, v_d, a_d = plan[step] if step <= n_move else hold
        state = impedance_step(state, x_d, v_d, a_d, f_ext, impedance)
        theta = float(np.clip(project_to_joint(true_joint, grasp, state.x),
                              sim_cfg.lower_limit, sim_cfg.upper_limit))
        residual = state.x - joint_motion(true_joint, grasp, theta)
        f_ext = -sim_cfg.k_contact * residual
        if np.linalg.norm(residual) > sim_cfg.r_break:
            broken = True
            theta = thetas[-1]
            break
        thetas.append(theta)
        commands.append(sign * min(step, n_move) / n_move * target_delta)

    last = len(thetas) - 1
    t_end = last * impedance.dt
    frames = []
    for k in range(n_frames):
        i = int(round(last * (k + 1) / n_frames))
        pose = np.zeros(len(gt_joints))
        pose[part_index] = thetas[i]
        images = [render_articulated(gt_scene, gt_joints, pose, cam, render_cfg)
                  for cam in cameras]
        frames.append(Frame(i * impedance.dt, pose, images, commands[i]))
    seq = ObservationSequence(frames, list(cameras), part_index, broken,
                              {"t_end": t_end, "target_delta": float(target_delta)})
    return seq, thetas[-1]


# ------------------------------------------------------------------ files

def save_sequence(seq: ObservationSequence, out_dir, debug_images=False):
    """Manifest + per-image GSIM files; ground-truth poses go to a sidecar file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    for t, frame in enumerate(seq.frames):
        paths = []
        for v, img in enumerate(frame.images):
            name = f"frame{t:03d}_cam{v}.gsim"
            save_image_gsim(out / name, img)
            if debug_images:
                write_ppm(out / f"frame{t:03d}_cam{v}.ppm", img.rgb)
                write_pgm_depth(out / f"frame{t:03d}_cam{v}_depth.pgm", img.depth)
            paths.append(name)
        frames.append({"time": frame.time, "commanded": frame.commanded, "images": paths})
    dump_json({"cameras": [c.to_dict() for c in seq.cameras], "camera_ids": list(range(len(seq.cameras))),
               "part_index": seq.part_index, "broken": seq.broken, "meta": seq.meta,
               "frames": frames}, out / "manifest.json")
    dump_json({"thetas": [f.theta.tolist() for f in seq.frames]}, out / "gt_thetas.json")


def load_sequence(seq_dir, with_ground_truth=False) -> ObservationSequence:
    d = Path(seq_dir)
    man = load_json(d / "manifest.json")
    gt = None
    if with_ground_truth and (d / "gt_thetas.json").exists():
        gt = load_json(d / "gt_thetas.json")["thetas"]
    frames = []
    for t, f in enumerate(man["frames"]):
        imgs = [load_image_gsim(d / p) for p in f["images"]]
        theta = np.array(gt[t]) if gt is not None else np.array([])
        frames.append(Frame(float(f["time"]), theta, imgs, float(f.get("commanded", 0.0))))
    return ObservationSequence(frames, [Camera.from_dict(c) for c in man["cameras"]],
                               int(man["part_index"]), bool(man["broken"]), man.get("meta", {}))
