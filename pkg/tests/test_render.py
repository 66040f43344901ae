import os
import subprocess
import sys

import numpy as np
import pytest

from artsplat.errors import ConfigurationError
from artsplat.render import (BACKEND_NAME, RenderConfig, composite_pixel, project_gaussian, render,
                             render_articulated)
from artsplat.render.backend import load_backend
from artsplat.render.core import footprint_radius, project_arrays
from artsplat.scene import Camera, GaussianSphere, JointSpec, Scene, se3_from_rt, translation

from oracles import brute_force_render, project_one, random_scene

CAM = Camera(30.0, 30.0, 15.5, 15.5, 32, 32)


def test_projection_matches_oracle():
    scene = random_scene(np.random.default_rng(0), 10)
    m2, cov, z, vis = project_arrays(scene.means, scene.rotations, scene.scales, CAM)
    for i in range(len(scene)):
        om, oc, oz = project_one(scene.means[i], scene.rotations[i], scene.scales[i], CAM)
        np.testing.assert_allclose(m2[i], om, atol=1e-12)
        np.testing.assert_allclose(cov[i], oc, atol=1e-10)
        assert z[i] == pytest.approx(oz)
    assert vis.all()


def test_project_gaussian_culls_behind_camera():
    g = GaussianSphere([0, 0, -1.0], [1, 0, 0, 0], [0.1] * 3, 0.5, [1, 1, 1], [0.0])
    assert project_gaussian(g, CAM) is None
    g2 = GaussianSphere([0, 0, 2.0], [1, 0, 0, 0], [0.1] * 3, 0.5, [1, 0, 0], [0.0])
    p = project_gaussian(g2, CAM)
    np.testing.assert_allclose(p.mean2d, [15.5, 15.5])
    assert p.view_depth == 2.0


@pytest.mark.parametrize("seed", range(5))
def test_render_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    scene = random_scene(rng, int(rng.integers(1, 11)))
    img = render(scene, CAM)
    rgb, depth, alpha = brute_force_render(scene, CAM)
    assert np.max(np.abs(img.rgb - rgb)) < 1e-6
    assert np.max(np.abs(img.alpha - alpha)) < 1e-6
    assert np.max(np.abs(img.depth - depth)) < 1e-6


def test_backends_agree():
    rng = np.random.default_rng(7)
    scene = random_scene(rng, 40)
    cfg = RenderConfig(background=(0.2, 0.3, 0.4))
    a = render(scene, CAM, cfg, kernels=load_backend("python"))
    try:
        b = render(scene, CAM, cfg, kernels=load_backend("cython"))
    except ImportError:
        pytest.skip("compiled backend not built")
    np.testing.assert_allclose(a.rgb, b.rgb, atol=1e-13)
    np.testing.assert_allclose(a.depth, b.depth, atol=1e-13)


def test_env_var_forces_pure_python_backend():
    out = subprocess.run([sys.executable, "-c",
                          "from artsplat.render import BACKEND_NAME; print(BACKEND_NAME)"],
                         env={**os.environ, "ARTSPLAT_PURE_PYTHON": "1"}, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "python"
    assert BACKEND_NAME in ("cython", "python")


def test_empty_scene_renders_background():
    cfg = RenderConfig(background=(0.1, 0.2, 0.3))
    img = render(Scene.empty(), CAM, cfg)
    np.testing.assert_array_equal(img.rgb, np.broadcast_to([0.1, 0.2, 0.3], (32, 32, 3)))
    assert not img.alpha.any() and not img.depth.any()


def test_input_order_does_not_change_the_image():
    rng = np.random.default_rng(11)
    scene = random_scene(rng, 30)
    perm = rng.permutation(30)
    a = render(scene, CAM)
    b = render(scene.subset(perm), CAM)
    np.testing.assert_array_equal(a.rgb, b.rgb)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_moving_scene_and_camera_together_is_invisible():
    rng = np.random.default_rng(12)
    scene = random_scene(rng, 15)
    T = translation(0.3, -0.2, 0.5)
    moved = scene.replace(means=scene.means + T[:3, 3])
    cam2 = Camera(CAM.fx, CAM.fy, CAM.cx, CAM.cy, 32, 32,
                  CAM.extrinsics @ np.linalg.inv(T))
    a, b = render(scene, CAM), render(moved, cam2)
    np.testing.assert_allclose(a.rgb, b.rgb, atol=1e-9)
    np.testing.assert_allclose(a.depth, b.depth, atol=1e-9)


def test_opaque_splat_depth_and_alpha():
    g = GaussianSphere([0, 0, 3.0], [1, 0, 0, 0], [0.5, 0.5, 0.01], 1.0, [0, 1, 0], [0.0])
    img = render(Scene.from_gaussians([g], 0), CAM)
    assert img.depth[15, 15] == pytest.approx(3.0)
    assert img.alpha[15, 15] > 0.99
    assert img.alpha[0, 0] < img.alpha[15, 15]


def test_composite_pixel_closed_form():
    rgb, alpha = composite_pixel([((1, 0, 0), 0.5), ((0, 1, 0), 0.5)], background=(0, 0, 1))
    np.testing.assert_allclose(rgb, [0.5, 0.25, 0.25])
    assert alpha == pytest.approx(0.75)
    rgb, alpha = composite_pixel([((1, 1, 1), 1.0), ((1, 0, 0), 0.9)])
    np.testing.assert_allclose(rgb, [1, 1, 1])
    assert alpha == 1.0


def test_footprint_never_cuts_contributing_pixels():
    # Opaque splats reach alpha_min farther out than three standard deviations.
    cov = np.array([[[4.0, 0.0], [0.0, 1.0]]])
    r = footprint_radius(cov, np.array([1.0]), RenderConfig())
    d = r[0] / 2.0
    assert np.exp(-0.5 * d * d) <= 1 / 255
    assert footprint_radius(cov, np.array([1e-3]), RenderConfig())[0] == -1.0


def test_render_articulated_zero_pose_is_static_render():
    rng = np.random.default_rng(13)
    scene = random_scene(rng, 12, part_count=1)
    j = JointSpec([0, 1.0, 0], [0, 0, 2.0], "revolute")
    np.testing.assert_allclose(render_articulated(scene, [j], [0.0], CAM).rgb,
                               render(scene, CAM).rgb, atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(cutoff_sigma=0.5), dict(alpha_min=0.0),
                                    dict(transmittance_stop=-1.0), dict(background=(0, 0))])
def test_render_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        RenderConfig(**kwargs)
