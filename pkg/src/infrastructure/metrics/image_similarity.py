"""
Image similarity: multi-scale SSIM and interior PSNR on grayscale images.
"""

import logging
import math
from typing import Tuple

import torch
import torch.nn.functional as F

from ...domain.models.errors import InvalidArgumentError
from ...domain.models.mapping_models import DocumentImage

logger = logging.getLogger(__name__)

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WIN_SIZE = 11
WIN_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _gauss_1d(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - size // 2
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _gaussian_filter(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    """Separable valid-mode Gaussian blur of (1, 1, H, W)."""
    out = F.conv2d(x, win.view(1, 1, 1, -1))
    return F.conv2d(out, win.view(1, 1, -1, 1))


def _ssim_terms(x: torch.Tensor, y: torch.Tensor, win: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    c1 = K1 ** 2
    c2 = K2 ** 2
    mu1 = _gaussian_filter(x, win)
    mu2 = _gaussian_filter(y, win)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu1_mu2 = mu1 * mu2
    sigma1_sq = _gaussian_filter(x * x, win) - mu1_sq
    sigma2_sq = _gaussian_filter(y * y, win) - mu2_sq
    sigma12 = _gaussian_filter(x * y, win) - mu1_mu2

    cs_map = (2 * sigma12 + c2) / (sigma1_sq + sigma2_sq + c2)
    ssim_map = ((2 * mu1_mu2 + c1) / (mu1_sq + mu2_sq + c1)) * cs_map
    return ssim_map.mean(), cs_map.mean()


def scale_count(height: int, width: int, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Largest k <= max_scales with min_side / 2^(k-1) >= window size."""
    side = min(height, width)
    if side < WIN_SIZE:
        raise InvalidArgumentError(f"images must be at least {WIN_SIZE}px on each side, got {height}x{width}")
    k = 1
    while k < max_scales and side / 2 ** k >= WIN_SIZE:
        k += 1
    return k


def _gray_tensor(image: DocumentImage) -> torch.Tensor:
    return torch.from_numpy(image.gray())[None, None]


def ms_ssim(a: DocumentImage, b: DocumentImage) -> float:
    """
    Multi-scale SSIM in [0, 1] on grayscale versions of `a` and `b`.

    Images smaller than 176px on a side use fewer scales with the standard
    weights renormalized. Negative contrast-structure terms are clamped to 0.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise InvalidArgumentError(
            f"ms_ssim needs equal sizes, got {a.height}x{a.width} and {b.height}x{b.width}"
        )
    levels = scale_count(a.height, a.width)
    weights = torch.tensor(MS_SSIM_WEIGHTS[:levels], dtype=torch.float64)
    weights = weights / weights.sum()
    win = _gauss_1d(WIN_SIZE, WIN_SIGMA)

    x, y = _gray_tensor(a), _gray_tensor(b)
    values = []
    for level in range(levels):
        ssim_value, cs_value = _ssim_terms(x, y, win)
        if level < levels - 1:
            values.append(cs_value)
            x = F.avg_pool2d(x, kernel_size=2)
            y = F.avg_pool2d(y, kernel_size=2)
        else:
            values.append(ssim_value)
    stacked = torch.relu(torch.stack(values))
    score = float(torch.prod(stacked ** weights))
    return min(max(score, 0.0), 1.0)


def interior_psnr(a: DocumentImage, b: DocumentImage, border: int = 2) -> float:
    """PSNR (data range 1) over all channels, excluding a border band."""
    if a.pixels.shape != b.pixels.shape:
        raise InvalidArgumentError(f"psnr needs equal shapes, got {a.pixels.shape} and {b.pixels.shape}")
    pa = a.pixels.astype("float64")
    pb = b.pixels.astype("float64")
    if border and a.height > 2 * border and a.width > 2 * border:
        pa = pa[border:-border, border:-border]
        pb = pb[border:-border, border:-border]
    mse = float(((pa - pb) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
