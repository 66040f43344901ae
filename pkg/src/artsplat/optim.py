"""Joint refinement by descending the photometric articulation loss, and static scene fitting."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import ConfigurationError, DivergenceError, PreconditionError
from .harness.metrics import joint_errors
from .losses import LossConfig, psnr, ssim_torch
from .render.core import RenderConfig, render
from .render.diff import DTYPE, ArticulationProblem, JointParams, render_tensors
from .scene import Camera, JointSpec, Scene, dump_json, joints_to_dict
from .sim import ObservationSequence

GROUPS = ("axis", "origin", "theta", "skin_logits")


@dataclass(frozen=True)
class OptimizeConfig:
    max_iters: int = 150
    lr_axis: float = 0.02
    lr_origin: float = 0.01
    lr_theta: float = 0.02
    lr_skin_logits: float = 0.05
    eps: float = 1e-6
    window: int = 20
    seed: int = 0
    method: str = "adam"           # "adam" or "gd"
    decay: float = 1.0             # learning-rate factor applied every iteration
    theta_init: str = "zero"       # "zero" or "ramp" (planned joint values per frame)
    only_moved_part: bool = True
    optimize_skin: bool = True
    # static fitting
    lr_means: float = 1e-3
    lr_rotation: float = 5e-3
    lr_scale: float = 1e-2
    lr_opacity: float = 2e-2
    lr_color: float = 1e-2

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        rates = (self.lr_axis, self.lr_origin, self.lr_theta, self.lr_skin_logits, self.lr_means,
                 self.lr_rotation, self.lr_scale, self.lr_opacity, self.lr_color)
        if min(rates) <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.method not in ("adam", "gd"):
            raise ConfigurationError(f"unknown optimizer {self.method!r}")
        if self.theta_init not in ("zero", "ramp"):
            raise ConfigurationError(f"unknown theta_init {self.theta_init!r}")
        if self.window < 1 or not self.eps >= 0:
            raise ConfigurationError("window must be positive and eps non-negative")

    def to_dict(self):
        return asdict(self)


class _Stepper:
    """Per-group first-order updates: plain gradient descent or Adam."""

    def __init__(self, method, rates, decay=1.0, betas=(0.9, 0.999), eps=1e-8):
        self.method = method
        self.rates = dict(rates)
        self.decay = decay
        self.betas = betas
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        scale = self.decay ** (self.t - 1)
        b1, b2 = self.betas
        for name, g in grads.items():
            lr = self.rates[name] * scale
            if self.method == "gd":
                params[name] = params[name] - lr * g
                continue
            m = self.m.get(name, np.zeros_like(g)) * b1 + (1 - b1) * g
            v = self.v.get(name, np.zeros_like(g)) * b2 + (1 - b2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def articulation_loss(scene: Scene, joints, thetas, cams, observed, cfg=LossConfig(),
                      render_cfg=RenderConfig(), skin_logits=None) -> float:
    """Photometric + depth loss summed over frames and views, plus regularizers."""
    jp = JointParams.from_specs(joints)
    problem = ArticulationProblem(scene, jp.joint_types, cams, observed, cfg, render_cfg)
    logits = scene.skin_logits if skin_logits is None else skin_logits
    return problem.loss(jp, np.asarray(thetas, dtype=np.float64).reshape(len(observed), -1),
                        logits)


@dataclass
class RefinementResult:
    joints: list
    thetas: np.ndarray
    loss_trace: list
    iterations: int
    skin_logits: Optional[np.ndarray] = None
    final_loss: float = float("nan")
    ae_trace: list = field(default_factory=list)
    oe_trace: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"joints": joints_to_dict(self.joints)["joints"],
                "thetas": np.asarray(self.thetas).tolist(),
                "loss_trace": [float(x) for x in self.loss_trace],
                "final_loss": float(self.final_loss), "iters": int(self.iterations),
                "metrics": self.metrics}

    def save(self, json_path, csv_path=None):
        dump_json(self.to_dict(), json_path)
        csv_path = csv_path or Path(json_path).with_suffix(".csv")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            has_gt = bool(self.ae_trace)
            w.writerow(["iter", "loss"] + (["AE", "OE"] if has_gt else []))
            for i, loss in enumerate(self.loss_trace):
                row = [i, repr(float(loss))]
                if has_gt:
                    oe = self.oe_trace[i]
                    row += [repr(self.ae_trace[i]), "" if oe is None else repr(oe)]
                w.writerow(row)


def _moved_metrics(joints, gt_joints, part):
    ae, oe = joint_errors(joints[part], gt_joints[part])
    return ae, oe


def refine(scene: Scene, j_init: Sequence[JointSpec], observations: ObservationSequence,
           loss_cfg: LossConfig = LossConfig(), opt_cfg: OptimizeConfig = OptimizeConfig(),
           gt_joints: Optional[Sequence[JointSpec]] = None,
           render_cfg: RenderConfig = RenderConfig()) -> RefinementResult:
    """Jointly descend joint axes/origins, per-frame states and skin logits."""
    j_init = list(j_init)
    if len(j_init) != scene.part_count:
        raise PreconditionError("j_init must have one joint per movable part")
    n_frames = len(observations.frames)
    if n_frames < 2:
        raise PreconditionError("refinement needs at least 2 frames")
    types = tuple(j.joint_type for j in j_init)
    problem = ArticulationProblem(scene, types, observations.cameras, observations.observed,
                                  loss_cfg, render_cfg)
    K = len(j_init)
    part = observations.part_index
    jp = JointParams.from_specs(j_init)
    params = {"axis": jp.axes.copy(), "origin": jp.origins.copy(),
              "theta": np.zeros((n_frames, K)), "skin_logits": np.array(scene.skin_logits)}
    if opt_cfg.theta_init == "ramp":
        params["theta"][:, part] = observations.commanded

    # Which entries may move: the manipulated part's joint and state, plus skinning.
    mask = {name: np.ones_like(v) for name, v in params.items()}
    if opt_cfg.only_moved_part:
        for name in ("axis", "origin"):
            mask[name][:] = 0.0
            mask[name][part] = 1.0
        mask["theta"][:] = 0.0
        mask["theta"][:, part] = 1.0
    if not opt_cfg.optimize_skin:
        mask["skin_logits"][:] = 0.0
    rates = {"axis": opt_cfg.lr_axis, "origin": opt_cfg.lr_origin, "theta": opt_cfg.lr_theta,
             "skin_logits": opt_cfg.lr_skin_logits}
    stepper = _Stepper(opt_cfg.method, rates, opt_cfg.decay)

    def current_joints():
        return JointParams(params["axis"], params["origin"], types).to_specs()

    trace, ae_trace, oe_trace = [], [], []
    it = 0
    for it in range(1, opt_cfg.max_iters + 1):
        loss, g = problem.evaluate(JointParams(params["axis"], params["origin"], types),
                                   params["theta"], params["skin_logits"])
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}", iteration=it)
        trace.append(loss)
        if gt_joints is not None:
            ae, oe = _moved_metrics(current_joints(), gt_joints, part)
            ae_trace.append(ae)
            oe_trace.append(oe)
        grads = {"axis": g.d_axis, "origin": g.d_origin, "theta": g.d_theta,
                 "skin_logits": g.d_skin_logits}
        stepper.step(params, {k: grads[k] * mask[k] for k in GROUPS if mask[k].any()})
        params["axis"] = params["axis"] / np.linalg.norm(params["axis"], axis=1, keepdims=True)
        if len(trace) > opt_cfg.window:
            old = trace[-1 - opt_cfg.window]
            if abs(old - loss) <= opt_cfg.eps * max(abs(old), 1e-300):
                break

    final_loss = problem.loss(JointParams(params["axis"], params["origin"], types),
                              params["theta"], params["skin_logits"])
    if not np.isfinite(final_loss):
        raise DivergenceError("non-finite loss after the last step", iteration=it)
    joints = current_joints()
    result = RefinementResult(joints, params["theta"], trace, it, params["skin_logits"],
                              final_loss, ae_trace, oe_trace)
    if gt_joints is not None:
        ae0, oe0 = _moved_metrics(j_init, gt_joints, part)
        ae1, oe1 = _moved_metrics(joints, gt_joints, part)
        result.metrics = {"part_index": part, "initial_ae": ae0, "initial_oe": oe0,
                          "final_ae": ae1, "final_oe": oe1}
    return result


# ------------------------------------------------------------ static fitting

def _quat_to_rotmat_torch(q):
    q = q / torch.linalg.norm(q, dim=1, keepdim=True)
    w, x, y, z = q.unbind(1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], 1).reshape(-1, 3, 3)


def _static_render(p, cam, cfg):
    rot = _quat_to_rotmat_torch(p["rotation"])
    return render_tensors(p["means"], rot, torch.exp(p["log_scale"]), p["color"],
                          torch.sigmoid(p["opacity_logit"]), cam, cfg)[0]


def fit_static(init_scene: Scene, views: Sequence, loss_cfg: LossConfig = LossConfig(),
               opt_cfg: OptimizeConfig = OptimizeConfig(), render_cfg=RenderConfig()):
    """Fit Gaussian attributes (fixed count) to posed RGB views.

    Returns ``(scene, psnr_per_view)``.
    """
    views = list(views)
    if len(views) < 3:
        raise PreconditionError("static fitting needs at least 3 views")
    op = np.clip(init_scene.opacities, 1e-4, 1 - 1e-4)
    params = {"means": np.array(init_scene.means), "rotation": np.array(init_scene.rotations),
              "log_scale": np.log(init_scene.scales), "opacity_logit": np.log(op / (1 - op)),
              "color": np.array(init_scene.colors)}
    rates = {"means": opt_cfg.lr_means, "rotation": opt_cfg.lr_rotation,
             "log_scale": opt_cfg.lr_scale, "opacity_logit": opt_cfg.lr_opacity,
             "color": opt_cfg.lr_color}
    stepper = _Stepper(opt_cfg.method, rates, opt_cfg.decay)
    targets = [torch.from_numpy(np.array(img.rgb)) for _, img in views]
    trace = []
    for it in range(1, opt_cfg.max_iters + 1):
        tp = {k: torch.tensor(v, dtype=DTYPE, requires_grad=True) for k, v in params.items()}
        total = 0.0
        for (cam, _), target in zip(views, targets):
            rgb = _static_render(tp, cam, render_cfg)
            loss = loss_cfg.lambda_l1 * (rgb - target).abs().mean()
            if loss_cfg.lambda_ssim:
                loss = loss + loss_cfg.lambda_ssim * (1.0 - ssim_torch(rgb, target))
            loss.backward()
            total += float(loss.detach())
        if not np.isfinite(total):
            raise DivergenceError(f"non-finite loss at iteration {it}", iteration=it)
        trace.append(total)
        stepper.step(params, {k: tp[k].grad.numpy().copy() for k in params})
        params["rotation"] /= np.linalg.norm(params["rotation"], axis=1, keepdims=True)
        params["color"] = np.clip(params["color"], 0.0, 1.0)
        if len(trace) > opt_cfg.window:
            old = trace[-1 - opt_cfg.window]
            if abs(old - total) <= opt_cfg.eps * max(abs(old), 1e-300):
                break
    scene = init_scene.replace(means=params["means"], rotations=params["rotation"],
                               scales=np.exp(params["log_scale"]),
                               opacities=1.0 / (1.0 + np.exp(-params["opacity_logit"])),
                               colors=params["color"])
    return scene, [psnr(render(scene, cam, render_cfg), img) for cam, img in views]
