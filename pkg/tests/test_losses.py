import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from artsplat.errors import ConfigurationError, DimensionError
from artsplat.losses import (SSIM_C1, SSIM_C2, LossConfig, gaussian_window, psnr, skin_entropy,
                             ssim, ssim_torch)
from artsplat.optim import articulation_loss
from artsplat.render.core import RenderConfig, render_articulated
from artsplat.render.diff import ArticulationProblem
from artsplat.scene import Camera, JointSpec, Scene

from oracles import random_scene


def sk_ssim(a, b):
    return structural_similarity(a, b, channel_axis=2, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, data_range=1.0)


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_skimage(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((24 + seed, 30, 3))
    b = np.clip(a + rng.normal(0, 0.05 * (seed + 1), a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(sk_ssim(a, b), abs=1e-12)


def test_ssim_identity_is_exactly_one():
    a = np.random.default_rng(0).random((16, 16, 3))
    assert ssim(a, a) == 1.0


def test_ssim_of_constant_black_and_white_is_the_constant_floor():
    black, white = np.zeros((16, 16, 3)), np.ones((16, 16, 3))
    expected = (SSIM_C1 * SSIM_C2) / ((1 + SSIM_C1) * SSIM_C2)
    assert ssim(black, white) == pytest.approx(expected, rel=1e-9)
    assert expected < 0.01


def test_ssim_is_continuous_under_tiny_noise():
    rng = np.random.default_rng(1)
    a = rng.random((32, 32, 3))
    assert ssim(a, a + rng.normal(0, 1e-4, a.shape)) > 0.999


def test_ssim_shape_errors():
    with pytest.raises(DimensionError):
        ssim(np.zeros((16, 16, 3)), np.zeros((16, 17, 3)))
    with pytest.raises(DimensionError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_gaussian_window_normalized_and_symmetric():
    w = gaussian_window()
    assert float(w.sum()) == pytest.approx(1.0, abs=1e-15)
    assert torch.equal(w, w.T)


def test_skin_entropy_limits():
    uniform = torch.zeros(5, 4, dtype=torch.float64)
    assert float(skin_entropy(uniform)) == pytest.approx(5 * np.log(4))
    one_hot = torch.tensor([[30.0, 0.0, 0.0]], dtype=torch.float64)
    assert float(skin_entropy(one_hot)) < 1e-10


def test_psnr():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a) == float("inf")


def test_loss_config_validation():
    with pytest.raises(ConfigurationError):
        LossConfig(lambda_l1=-1)
    with pytest.raises(ConfigurationError):
        LossConfig(lambda_l1=0, lambda_ssim=0)


def _setup(seed=0, k=1):
    rng = np.random.default_rng(seed)
    logits = np.full((25, k + 1), -30.0)
    logits[np.arange(25), rng.integers(0, k + 1, 25)] = 30.0
    scene = random_scene(rng, 25, part_count=k).replace(skin_logits=logits)
    cam = Camera.look_at([0, -2.0, 2.0], [0, 0, 2.0], width=24, height=24)
    joints = [JointSpec.normalized([0.2, 0.1, 1.0], [0.1, 0.0, 2.0], "revolute")]
    return scene, joints, [cam]


def test_loss_vanishes_at_ground_truth():
    scene, joints, cams = _setup()
    poses = np.array([[0.2], [0.5]])
    observed = [[render_articulated(scene, joints, p, cams[0])] for p in poses]
    loss = articulation_loss(scene, joints, poses, cams, observed)
    entropy_floor = LossConfig().lambda_entropy * float(skin_entropy(
        torch.from_numpy(np.array(scene.skin_logits))))
    assert loss < 1e-6 + entropy_floor


def test_unit_norm_penalty():
    scene, joints, cams = _setup()
    observed = [[render_articulated(scene, joints, [0.0], cams[0])]]
    cfg = LossConfig(lambda_entropy=0.0)
    problem = ArticulationProblem(scene, ["revolute"], cams, observed, cfg)
    axes = torch.tensor([[0.0, 0.0, 1.1]], dtype=torch.float64)
    reg = problem.regularizer(axes, torch.zeros(25, 2, dtype=torch.float64))
    assert float(reg) == pytest.approx(cfg.lambda_unit * 0.01)


def test_loss_grows_away_from_true_state():
    scene, joints, cams = _setup(seed=3)
    truth = 0.4
    observed = [[render_articulated(scene, joints, [truth], cams[0])]]
    offsets = [0.0, 0.02, 0.05, 0.1, 0.2]
    for sign in (1, -1):
        losses = [articulation_loss(scene, joints, [[truth + sign * d]], cams, observed)
                  for d in offsets]
        assert all(b > a for a, b in zip(losses, losses[1:]))
