"""Command-line interface.

Exit codes: 0 success, 1 other failure, 2 configuration error, 3 numerical
divergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (ArtsplatError, ConfigurationError, DivergenceError, InvalidInputError,
                     ParameterError, PreconditionError)
from .harness.experiment import (ExperimentConfig, RigConfig, annotation_camera, camera_rig,
                                 run_experiment)
from .harness.metrics import joint_errors
from .harness.objects import ArticulatedObject, Template, generate_object
from .imageio import load_image_gsim, save_image_gsim, write_pgm_depth, write_ppm
from .jointinit import AnnotationSet, NoiseConfig, init_joints, synthesize_annotations
from .optim import OptimizeConfig, refine
from .render.core import RenderConfig, render, render_articulated
from .scene import (Camera, JointSpec, dump_json, joints_from_dict, joints_to_dict, load_json,
                    load_scene, save_scene)
from .sim import ImpedanceParams, SimConfig, load_sequence, save_sequence, simulate_interaction

log = logging.getLogger("artsplat")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


# ------------------------------------------------------------------ helpers

def _save_object_truth(obj: ArticulatedObject, path):
    """Ground-truth joints plus what the other commands need to rebuild cameras and plans."""
    d = joints_to_dict(obj.joints, obj.grasp_points)
    d.update(template=obj.template.value, target_deltas=[float(t) for t in obj.target_deltas],
             upper_limits=[float(u) for u in obj.upper_limits], center=obj.center.tolist(),
             scale=obj.scale, front_normal=np.asarray(obj.front_normal).tolist())
    dump_json(d, path)


def _load_object_truth(scene, path):
    d = load_json(path)
    joints, grasps = joints_from_dict(d)
    n = len(joints)
    return ArticulatedObject(
        Template.parse(d.get("template", "door")), scene, joints, grasps,
        d.get("target_deltas", [0.0] * n), d.get("upper_limits", [np.inf] * n),
        np.array(d.get("center", [0.0, 0.0, 0.0])), float(d.get("scale", 1.0)),
        np.array(d.get("front_normal", [0.0, -1.0, 0.0])))


def _load_joints(path):
    return joints_from_dict(load_json(path))[0]


def _load_camera(path, index=0):
    d = load_json(path)
    if "cameras" in d:
        return Camera.from_dict(d["cameras"][index])
    return Camera.from_dict(d)


def _rig(args):
    return RigConfig(count=args.views, resolution=args.resolution)


# ------------------------------------------------------------------ commands

def cmd_generate(args):
    obj = generate_object(args.template, args.seed)
    out = Path(args.out)
    save_scene(obj.scene, out)
    truth = Path(args.joints) if args.joints else out.with_name("joints.json")
    _save_object_truth(obj, truth)
    rig = _rig(args)
    dump_json(annotation_camera(obj, rig).to_dict(), out.with_name("camera.json"))
    dump_json({"cameras": [c.to_dict() for c in camera_rig(obj, rig)]},
              out.with_name("rig.json"))
    log.info("wrote %s (%d gaussians), %s", out, len(obj.scene), truth)


def cmd_render(args):
    scene = load_scene(args.scene)
    cam = _load_camera(args.camera, args.index)
    if args.joints:
        joints = _load_joints(args.joints)
        pose = np.zeros(len(joints)) if args.pose is None else np.array(args.pose, dtype=float)
        img = render_articulated(scene, joints, pose, cam)
    else:
        img = render(scene, cam)
    save_image_gsim(args.out, img)
    if args.ppm:
        out = Path(args.out)
        write_ppm(out.with_suffix(".ppm"), img.rgb)
        write_pgm_depth(out.with_name(out.stem + "_depth.pgm"), img.depth)


def cmd_annotate(args):
    scene = load_scene(args.scene)
    obj = _load_object_truth(scene, args.gt)
    cam = _load_camera(args.camera) if args.camera else annotation_camera(obj)
    noise = NoiseConfig.preset(args.noise)
    ann = synthesize_annotations(scene, obj.joints, cam, noise, seed=args.seed,
                                 handle_points=obj.grasp_points)
    dump_json(ann.to_dict(), args.out)


def cmd_init_joints(args):
    ann = AnnotationSet.from_dict(load_json(args.ann))
    depth = load_image_gsim(args.depth)
    cam = _load_camera(args.camera)
    joints = init_joints(ann, depth, cam)
    dump_json(joints_to_dict(joints), args.out)


def cmd_simulate(args):
    scene = load_scene(args.scene)
    obj = _load_object_truth(scene, args.gt)
    plan = _load_joints(args.plan)
    k = args.part
    if not 0 <= k < len(obj.joints):
        raise ConfigurationError(f"part {k} out of range")
    if len(plan) != len(obj.joints):
        raise ConfigurationError("plan must have one joint per movable part")
    cams = camera_rig(obj, _rig(args))
    target = args.target if args.target is not None else obj.target_deltas[k]
    seq, achieved = simulate_interaction(scene, obj.joints, k, target, cams, args.frames,
                                         ImpedanceParams(), plan[k], obj.grasp_points[k],
                                         SimConfig(upper_limit=obj.upper_limits[k]),
                                         pull_direction=obj.front_normal)
    seq.meta["achieved_delta"] = float(achieved)
    save_sequence(seq, args.out, debug_images=args.ppm)
    log.info("achieved %.4f of %.4f (broken=%s)", achieved, target, seq.broken)


def cmd_refine(args):
    scene = load_scene(args.scene)
    seq = load_sequence(args.seq)
    j_init = _load_joints(args.init)
    opt = OptimizeConfig(**json.loads(args.opt)) if args.opt else OptimizeConfig(max_iters=60)
    if args.max_iters is not None:
        opt = OptimizeConfig(**{**opt.to_dict(), "max_iters": args.max_iters})
    gt = _load_joints(args.gt) if args.gt else None
    result = refine(scene, j_init, seq, opt_cfg=opt, gt_joints=gt)
    result.save(args.out)


def cmd_evaluate(args):
    result = load_json(args.result)
    est = [JointSpec.from_dict(j) for j in result["joints"]]
    gt = _load_joints(args.gt)
    if len(est) != len(gt):
        raise ConfigurationError("result and ground truth have different joint counts")
    rows = []
    for k, (e, g) in enumerate(zip(est, gt)):
        ae, oe = joint_errors(e, g)
        rows.append({"part_index": k, "joint_type": g.joint_type.value, "ae_deg": ae,
                     "oe_cm": oe})
    dump_json({"joints": rows}, args.out)


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    overrides = {"out_dir": args.out}
    if args.workers is not None:
        overrides["workers"] = args.workers
    cfg = ExperimentConfig.from_dict({**_config_fields(cfg), **overrides})
    report = run_experiment(cfg)
    agg = report.aggregates
    log.info("median AE %s -> %s, success %s -> %s", agg["median_initial_ae"],
             agg["median_final_ae"], agg["success_rate_before"], agg["success_rate_after"])


def _config_fields(cfg):
    return {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="artsplat", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)  # noqa: E731

    def rig_args(sp):
        sp.add_argument("--views", type=int, default=4)
        sp.add_argument("--resolution", type=int, default=128)

    sp = sub.add_parser("generate", help="build a procedural articulated object")
    sp.add_argument("--template", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--joints", help="ground-truth joints file (default: joints.json beside --out)")
    rig_args(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("render", help="render a scene to a GSIM image")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--index", type=int, default=0, help="camera index in a rig file")
    sp.add_argument("--joints")
    sp.add_argument("--pose", type=float, nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ppm", action="store_true", help="also write PPM/PGM previews")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("annotate", help="synthesize noisy part annotations")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--camera")
    sp.add_argument("--noise", default="default")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_annotate)

    sp = sub.add_parser("init-joints", help="estimate joints from annotations and depth")
    sp.add_argument("--ann", required=True)
    sp.add_argument("--depth", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_init_joints)

    sp = sub.add_parser("simulate", help="pull a part with a plan from estimated joints")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--part", type=int, default=0)
    sp.add_argument("--frames", type=int, default=10)
    sp.add_argument("--target", type=float)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ppm", action="store_true")
    rig_args(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("refine", help="refine joints against an observation sequence")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--seq", required=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--gt", help="ground truth, only used for error traces")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--opt", help="optimizer settings as a JSON object")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("evaluate", help="joint errors of a refinement result")
    sp.add_argument("--result", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("experiment", help="run the full recovery experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_experiment)
    return p


def exit_code(exc):
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, (ConfigurationError, ParameterError, PreconditionError)):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, InvalidInputError, json.JSONDecodeError, KeyError)):
        return EXIT_IO
    return EXIT_FAIL


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ArtsplatError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"artsplat {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
