"""Photometric loss terms: SSIM, L1, skinning entropy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossConfig:
    lambda_l1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_unit: float = 0.01
    lambda_entropy: float = 0.001
    depth_weight: float = 0.1

    def __post_init__(self):
        vals = (self.lambda_l1, self.lambda_ssim, self.lambda_unit, self.lambda_entropy,
                self.depth_weight)
        if min(vals) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.lambda_l1 + self.lambda_ssim <= 0:
            raise ConfigurationError("lambda_l1 + lambda_ssim must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def gaussian_window_1d(size=SSIM_WINDOW, sigma=SSIM_SIGMA, dtype=torch.float64):
    x = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA, dtype=torch.float64):
    g = gaussian_window_1d(size, sigma, dtype)
    return torch.outer(g, g)


def ssim_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean SSIM of two ``(H, W, C)`` tensors over valid window positions and channels."""
    if a.shape != b.shape:
        raise DimensionError(f"ssim shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    h, w, c = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DimensionError("ssim needs images of at least 11x11 pixels")
    # The Gaussian window is separable: blur rows then columns, all five maps at once.
    g = gaussian_window_1d(dtype=a.dtype)
    x = a.permute(2, 0, 1)
    y = b.permute(2, 0, 1)
    stack = torch.cat([x, y, x * x, y * y, x * y]).unsqueeze(0)
    n = stack.shape[1]
    out = F.conv2d(stack, g.view(1, 1, 1, -1).expand(n, 1, 1, SSIM_WINDOW), groups=n)
    out = F.conv2d(out, g.view(1, 1, -1, 1).expand(n, 1, SSIM_WINDOW, 1), groups=n)
    mu_x, mu_y, e_xx, e_yy, e_xy = out[0].split(c)
    var_x = e_xx - mu_x * mu_x
    var_y = e_yy - mu_y * mu_y
    cov = e_xy - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return (num / den).mean()


def _rgb(img):
    return np.asarray(getattr(img, "rgb", img), dtype=np.float64)


def ssim(a, b) -> float:
    """SSIM of two RGB images (``Image`` objects or ``(H, W, 3)`` arrays)."""
    with torch.no_grad():
        return float(ssim_torch(torch.from_numpy(_rgb(a)), torch.from_numpy(_rgb(b))))


def skin_entropy(logits: torch.Tensor) -> torch.Tensor:
    """Summed Shannon entropy of the per-Gaussian softmax skinning weights."""
    logp = torch.log_softmax(logits, dim=-1)
    return -(logp.exp() * logp).sum()


def psnr(a, b) -> float:
    mse = float(np.mean((_rgb(a) - _rgb(b)) ** 2))
    return float("inf") if mse == 0 else -10.0 * np.log10(mse)
