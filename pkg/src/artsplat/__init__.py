"""Articulated Gaussian-splat modeling: rendering, kinematics, joint estimation and refinement."""
from .errors import ArtsplatError
from .harness.experiment import ExperimentConfig, MetricsReport, run_experiment
from .harness.metrics import axis_error, origin_error
from .harness.objects import Template, generate_object
from .jointinit import NoiseConfig, init_joints, synthesize_annotations
from .kinematics import deform_scene, forward_kinematics, lbs_deform
from .losses import LossConfig, ssim
from .optim import OptimizeConfig, articulation_loss, refine
from .render import BACKEND_NAME, RenderConfig, render, render_articulated
from .render.diff import loss_gradients
from .scene import Camera, GaussianSphere, Image, JointSpec, JointType, Scene
from .sim import ImpedanceParams, impedance_step, simulate_interaction

__version__ = "0.1.0"

__all__ = [
    "ArtsplatError", "BACKEND_NAME", "Camera", "ExperimentConfig", "GaussianSphere", "Image",
    "ImpedanceParams", "JointSpec", "JointType", "LossConfig", "MetricsReport", "NoiseConfig",
    "OptimizeConfig", "RenderConfig", "Scene", "Template", "articulation_loss", "axis_error",
    "deform_scene", "forward_kinematics", "generate_object", "impedance_step", "init_joints",
    "lbs_deform", "loss_gradients", "origin_error", "refine", "render", "render_articulated",
    "simulate_interaction", "ssim", "synthesize_annotations",
]
