"""Compare the compiled and numpy rasterization kernels on procedural objects.

Usage: python3 benchmarks/bench_rasterizer.py [--resolution 128] [--repeats 3]
"""
import argparse
import time

import numpy as np
import torch

from artsplat.harness.experiment import camera_rig
from artsplat.harness.objects import generate_object
from artsplat.render.backend import load_backend
from artsplat.render.core import RenderConfig, render
from artsplat.render.diff import render_tensors
from artsplat.scene import quat_to_rotmat


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench(template, resolution, repeats, backends):
    obj = generate_object(template, 0)
    cam = camera_rig(obj)[1]
    cam = type(cam)(cam.fx * resolution / cam.width, cam.fy * resolution / cam.height,
                    (resolution - 1) / 2, (resolution - 1) / 2, resolution, resolution,
                    cam.extrinsics)
    s = obj.scene
    rot = torch.tensor(np.array([quat_to_rotmat(q) for q in s.rotations]))
    rows = []
    for name, k in backends.items():
        fwd = _best(lambda: render(s, cam, RenderConfig(), kernels=k), repeats)

        def fwd_bwd():
            t = {n: torch.tensor(np.array(getattr(s, n)), requires_grad=True)
                 for n in ("means", "colors", "opacities")}
            rgb, dsum, alpha = render_tensors(t["means"], rot, torch.tensor(s.scales), t["colors"],
                                              t["opacities"], cam, RenderConfig(), kernels=k)
            (rgb.sum() + dsum.sum() + alpha.sum()).backward()

        both = _best(fwd_bwd, repeats)
        rows.append((template, len(s), resolution, name, fwd, both))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--templates", nargs="+", default=["door", "drawer"])
    args = p.parse_args()
    backends = {}
    for name in ("cython", "python"):
        try:
            backends[name] = load_backend(name)
        except ImportError:
            print(f"{name} backend unavailable")
    print(f"{'template':<10}{'gaussians':>10}{'res':>6}  {'backend':<8}{'forward ms':>12}"
          f"{'fwd+bwd ms':>12}")
    results = {}
    for template in args.templates:
        for row in bench(template, args.resolution, args.repeats, backends):
            tpl, n, res, name, fwd, both = row
            results[(tpl, name)] = fwd
            print(f"{tpl:<10}{n:>10}{res:>6}  {name:<8}{fwd * 1e3:>12.1f}{both * 1e3:>12.1f}")
    for template in args.templates:
        if (template, "cython") in results and (template, "python") in results:
            print(f"{template}: compiled forward is "
                  f"{results[(template, 'python')] / results[(template, 'cython')]:.1f}x faster")


if __name__ == "__main__":
    main()
