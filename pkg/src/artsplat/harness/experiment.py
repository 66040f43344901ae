"""End-to-end recovery experiment: annotate, initialize, manipulate, refine, re-plan.

Each (seed, movable part) pair is one trial. A trial records the joint error of
the geometric initialization and of the refined joints, and whether pulling
the part with a plan made from each estimate reaches the target.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ArtsplatError, ConfigurationError
from ..imageio import write_ppm
from ..jointinit import NoiseConfig, init_joints, synthesize_annotations
from ..losses import LossConfig
from ..optim import OptimizeConfig, refine
from ..render.core import RenderConfig, render, render_articulated
from ..scene import Camera, dump_json, joints_to_dict, load_json
from ..sim import ImpedanceParams, SimConfig, simulate_interaction
from .metrics import joint_errors
from .objects import ArticulatedObject, Template, generate_object

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
TIMINGS_JSON = "timings.json"


@dataclass(frozen=True)
class RigConfig:
    """Cameras on a horizontal arc in front of the object, looking at its center."""
    count: int = 4
    radius: float = 1.5          # multiple of the object scale
    resolution: int = 128
    span_deg: float = 90.0
    elevation_deg: float = 15.0

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("rig needs at least one camera")
        if self.resolution < 32:
            raise ConfigurationError("rig resolution must be at least 32")
        if not self.radius > 0:
            raise ConfigurationError("rig radius must be positive")


def camera_rig(obj: ArticulatedObject, rig: RigConfig = RigConfig()):
    if rig.count == 1:
        azimuths = [0.0]
    else:
        azimuths = np.linspace(-rig.span_deg / 2, rig.span_deg / 2, rig.count)
    el = np.radians(rig.elevation_deg)
    r = rig.radius * obj.scale
    cams = []
    for az in np.radians(azimuths):
        offset = r * np.array([np.sin(az) * np.cos(el), -np.cos(az) * np.cos(el), np.sin(el)])
        cams.append(Camera.look_at(obj.center + offset, obj.center, width=rig.resolution,
                                   height=rig.resolution))
    return cams


def annotation_camera(obj: ArticulatedObject, rig: RigConfig = RigConfig()):
    """Frontal view used for the 2D annotations and the depth map."""
    eye = obj.center + rig.radius * obj.scale * np.asarray(obj.front_normal, dtype=np.float64)
    return Camera.look_at(eye, obj.center, width=rig.resolution, height=rig.resolution)


def _noise_from(value):
    if isinstance(value, NoiseConfig):
        return value
    if isinstance(value, str):
        return NoiseConfig.preset(value)
    if isinstance(value, dict):
        return NoiseConfig(**value)
    raise ConfigurationError(f"cannot read a noise level from {value!r}")


def _sub_config(cls, value):
    if isinstance(value, cls):
        return value
    known = {f.name for f in fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**value)


@dataclass(frozen=True)
class ExperimentConfig:
    template: str = "door"
    seeds: tuple = (0,)
    rig: RigConfig = RigConfig()
    noise: NoiseConfig = NoiseConfig()
    n_frames: int = 10
    target_delta: Optional[float] = None   # None: the template's own target
    success_fraction: float = 0.9
    loss: LossConfig = LossConfig()
    opt: OptimizeConfig = OptimizeConfig(max_iters=60)
    render: RenderConfig = RenderConfig()
    out_dir: Optional[str] = None
    debug_frames: bool = True
    workers: int = 1

    def __post_init__(self):
        Template.parse(self.template)
        seeds = tuple(int(s) for s in np.atleast_1d(self.seeds))
        if not seeds:
            raise ConfigurationError("at least one seed is required")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "noise", _noise_from(self.noise))
        if self.n_frames < 2:
            raise ConfigurationError("n_frames must be at least 2")
        if not 0 < self.success_fraction <= 1:
            raise ConfigurationError("success_fraction must be in (0, 1]")
        if self.target_delta is not None and not self.target_delta > 0:
            raise ConfigurationError("target_delta must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be positive")

    def to_dict(self):
        d = {"template": Template.parse(self.template).value, "seeds": list(self.seeds),
             "rig": asdict(self.rig), "noise": self.noise.to_dict(), "n_frames": self.n_frames,
             "target_delta": self.target_delta, "success_fraction": self.success_fraction,
             "loss": self.loss.to_dict(), "opt": self.opt.to_dict(),
             "render": asdict(self.render), "out_dir": self.out_dir,
             "debug_frames": self.debug_frames, "workers": self.workers}
        d["render"]["background"] = list(self.render.background)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        if "seeds" in d and isinstance(d["seeds"], int):
            d["seeds"] = tuple(range(d["seeds"]))
        for name, sub in (("rig", RigConfig), ("loss", LossConfig), ("opt", OptimizeConfig),
                          ("render", RenderConfig)):
            if name in d:
                val = d[name]
                if name == "render" and isinstance(val, dict) and "background" in val:
                    val = dict(val, background=tuple(val["background"]))
                d[name] = _sub_config(sub, val)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        return cls.from_dict(load_json(path))


@dataclass
class TrialResult:
    seed: int
    part_index: int
    joint_type: str
    initial_ae: Optional[float] = None
    initial_oe: Optional[float] = None
    final_ae: Optional[float] = None
    final_oe: Optional[float] = None
    achieved_before: Optional[float] = None
    achieved_after: Optional[float] = None
    target_delta: Optional[float] = None
    broken_before: Optional[bool] = None
    broken_after: Optional[bool] = None
    success_before: Optional[bool] = None
    success_after: Optional[bool] = None
    iterations: Optional[int] = None
    final_loss: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        return asdict(self)


CSV_COLUMNS = [f.name for f in fields(TrialResult)]


def _median(xs):
    return float(np.median(xs)) if xs else None


def _mean(xs):
    return float(np.mean(xs)) if xs else None


def aggregate(trials):
    """Summary statistics over trials; failed trials count as unsuccessful."""
    ok = [t for t in trials if t.ok]
    ae0 = [t.initial_ae for t in ok]
    ae1 = [t.final_ae for t in ok]
    oe0 = [t.initial_oe for t in ok if t.initial_oe is not None]
    oe1 = [t.final_oe for t in ok if t.final_oe is not None]
    n = len(trials)
    agg = {
        "n_trials": n,
        "n_failed": n - len(ok),
        "median_initial_ae": _median(ae0),
        "median_final_ae": _median(ae1),
        "mean_initial_ae": _mean(ae0),
        "mean_final_ae": _mean(ae1),
        "median_initial_oe": _median(oe0),
        "median_final_oe": _median(oe1),
        "success_rate_before": sum(bool(t.success_before) for t in trials) / n if n else None,
        "success_rate_after": sum(bool(t.success_after) for t in trials) / n if n else None,
        "fraction_improved": (sum(b <= a for a, b in zip(ae0, ae1)) / len(ok)) if ok else None,
    }
    if ae1 and agg["median_final_ae"] > 0:
        agg["ae_reduction"] = agg["median_initial_ae"] / agg["median_final_ae"]
    else:
        agg["ae_reduction"] = None
    return agg


@dataclass
class MetricsReport:
    config: dict
    trials: list
    aggregates: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)   # kept out of the report file

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.trials)

    def recompute_aggregates(self):
        return aggregate(self.trials)

    def to_dict(self):
        return {"config": self.config, "trials": [t.to_dict() for t in self.trials],
                "aggregates": self.aggregates}

    def save(self, out_dir):
        """Write the report JSON and CSV, plus wall-clock timings in a separate file."""
        out = Path(out_dir)
        dump_json(self.to_dict(), out / REPORT_JSON)
        with open(out / REPORT_CSV, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for t in self.trials:
                w.writerow(["" if v is None else v for v in (getattr(t, c) for c in CSV_COLUMNS)])
        if self.runtimes:
            dump_json(self.runtimes, out / TIMINGS_JSON)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / REPORT_JSON
        d = load_json(path)
        trials = [TrialResult(**t) for t in d["trials"]]
        return cls(d["config"], trials, d["aggregates"])


# ------------------------------------------------------------------ trials

def _success(achieved, target, broken, fraction):
    return bool(not broken and abs(achieved) >= fraction * abs(target))


def _pull(cfg, obj, cams, k, joint, target, n_frames):
    sim_cfg = SimConfig(upper_limit=obj.upper_limits[k])
    return simulate_interaction(obj.scene, obj.joints, k, target, cams, n_frames,
                                ImpedanceParams(), joint, obj.grasp_points[k], sim_cfg,
                                cfg.render, pull_direction=obj.front_normal)


def _debug_frames(out, obj, cams, seq, result, k):
    out.mkdir(parents=True, exist_ok=True)
    last = seq.frames[-1]
    for v, img in enumerate(last.images):
        write_ppm(out / f"observed_cam{v}.ppm", img.rgb)
    pose = np.array(result.thetas[-1])
    write_ppm(out / "refined_cam0.ppm",
              render_articulated(obj.scene, result.joints, pose, cams[0]).rgb)
    dump_json(joints_to_dict(result.joints), out / "refined_joints.json")


def run_seed(cfg: ExperimentConfig, seed: int):
    """All trials for one seed; returns ``(trials, runtimes)``."""
    timings = {}
    t0 = time.perf_counter()
    obj = generate_object(cfg.template, seed)
    acam = annotation_camera(obj, cfg.rig)
    cams = camera_rig(obj, cfg.rig)
    trials = []
    try:
        depth_view = render(obj.scene, acam, cfg.render)
        ann = synthesize_annotations(obj.scene, obj.joints, acam, cfg.noise, seed=seed,
                                     handle_points=obj.grasp_points)
        j_init = init_joints(ann, depth_view, acam)
    except ArtsplatError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        trials = [TrialResult(seed, k, j.joint_type.value, error=msg)
                  for k, j in enumerate(obj.joints)]
        return trials, {"seed": seed, "total": time.perf_counter() - t0}
    timings["init"] = time.perf_counter() - t0

    for k, gt in enumerate(obj.joints):
        trial = TrialResult(seed, k, gt.joint_type.value)
        target = float(cfg.target_delta if cfg.target_delta is not None else obj.target_deltas[k])
        trial.target_delta = target
        try:
            trial.initial_ae, trial.initial_oe = joint_errors(j_init[k], gt)
            t = time.perf_counter()
            seq, achieved = _pull(cfg, obj, cams, k, j_init[k], target, cfg.n_frames)
            trial.achieved_before, trial.broken_before = float(achieved), bool(seq.broken)
            trial.success_before = _success(achieved, target, seq.broken, cfg.success_fraction)
            timings[f"part{k}_simulate"] = time.perf_counter() - t

            t = time.perf_counter()
            result = refine(obj.scene, j_init, seq, cfg.loss, cfg.opt, gt_joints=obj.joints,
                            render_cfg=cfg.render)
            timings[f"part{k}_refine"] = time.perf_counter() - t
            trial.final_ae, trial.final_oe = joint_errors(result.joints[k], gt)
            trial.iterations, trial.final_loss = int(result.iterations), float(result.final_loss)

            t = time.perf_counter()
            seq2, achieved2 = _pull(cfg, obj, cams, k, result.joints[k], target, 1)
            trial.achieved_after, trial.broken_after = float(achieved2), bool(seq2.broken)
            trial.success_after = _success(achieved2, target, seq2.broken, cfg.success_fraction)
            timings[f"part{k}_replan"] = time.perf_counter() - t
            if cfg.out_dir and cfg.debug_frames:
                _debug_frames(Path(cfg.out_dir) / f"seed{seed:03d}_part{k}", obj, cams, seq,
                              result, k)
        except ArtsplatError as exc:
            trial.error = f"{type(exc).__name__}: {exc}"
        trials.append(trial)
    timings["total"] = time.perf_counter() - t0
    timings["seed"] = seed
    return trials, timings


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Run every seed, write the report if ``cfg.out_dir`` is set, and return it."""
    jobs = [(cfg, s) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_seed_star, jobs))
    else:
        outputs = [run_seed(*job) for job in jobs]
    trials = [t for ts, _ in outputs for t in ts]
    runtimes = {f"seed{tm['seed']}": {k: v for k, v in tm.items() if k != "seed"}
                for _, tm in outputs}
    config = cfg.to_dict()
    config.pop("workers")
    config.pop("out_dir")
    report = MetricsReport(config, trials, runtimes=runtimes)
    if cfg.out_dir:
        report.save(cfg.out_dir)
    return report


def with_seeds(cfg: ExperimentConfig, seeds) -> ExperimentConfig:
    return replace(cfg, seeds=tuple(seeds))
