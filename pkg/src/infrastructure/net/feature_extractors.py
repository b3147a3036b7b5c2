"""
Multiple feature extractors: three small convolutional encoders turning the
warped image, the foreground mask and the text-line mask into feature grids
at the latent size.
"""

import logging
import math
from typing import Tuple

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ...domain.models.errors import InvalidArgumentError
from ...domain.models.mapping_models import DocumentImage
from ...domain.models.run_config import NetConfig

logger = logging.getLogger(__name__)


class ConvEncoder(nn.Module):
    """
    Conv3x3 + GELU + 2x average pooling stages down to the latent size.
    Replicate padding keeps spatially constant inputs constant.
    """

    def __init__(self, in_channels: int, out_channels: int, input_size: int, latent_size: int):
        super().__init__()
        self.latent_size = latent_size
        stages = max(0, int(math.floor(math.log2(input_size / latent_size))))
        width = max(8, out_channels // 2)
        layers = []
        channels = in_channels
        for _ in range(stages):
            layers += [
                nn.Conv2d(channels, width, 3, padding=1, padding_mode="replicate"),
                nn.GELU(),
                nn.AvgPool2d(2),
            ]
            channels = width
        layers += [
            nn.Conv2d(channels, width, 3, padding=1, padding_mode="replicate"),
            nn.GELU(),
            nn.Conv2d(width, out_channels, 1),
        ]
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.body(x)
        if x.shape[-2:] != (self.latent_size, self.latent_size):
            x = F.adaptive_avg_pool2d(x, self.latent_size)
        return x


class MultiFeatureExtractor(nn.Module):
    """f_d from the image, f_m from the foreground mask, f_l from the text-line mask."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.input_size = cfg.input_size
        self.image_encoder = ConvEncoder(3, cfg.feat_dim, cfg.input_size, cfg.latent_size)
        self.foreground_encoder = ConvEncoder(1, cfg.feat_dim, cfg.input_size, cfg.latent_size)
        self.textline_encoder = ConvEncoder(1, cfg.feat_dim, cfg.input_size, cfg.latent_size)

    def _fit(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] == (self.input_size, self.input_size):
            return x
        return F.interpolate(x, size=(self.input_size, self.input_size),
                             mode="bilinear", align_corners=True)

    def forward(self, images: torch.Tensor, fg_masks: torch.Tensor,
                textline_masks: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if images.ndim != 4 or images.shape[1] != 3:
            raise InvalidArgumentError(f"images must be (batch, 3, H, W), got {tuple(images.shape)}")
        for name, mask in (("fg_masks", fg_masks), ("textline_masks", textline_masks)):
            if mask.ndim != 4 or mask.shape[1] != 1 or mask.shape[0] != images.shape[0] \
                    or mask.shape[-2:] != images.shape[-2:]:
                raise InvalidArgumentError(
                    f"{name} shape {tuple(mask.shape)} does not match images {tuple(images.shape)}"
                )
        f_d = self.image_encoder(self._fit(images))
        f_m = self.foreground_encoder(self._fit(fg_masks))
        f_l = self.textline_encoder(self._fit(textline_masks))
        return f_d, f_m, f_l


def image_to_tensor(image: DocumentImage, input_size: int) -> torch.Tensor:
    """(3, input_size, input_size) float32 tensor; grayscale is replicated to 3 channels."""
    pixels = image.pixels.astype(np.float32)
    if image.channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    tensor = torch.from_numpy(np.ascontiguousarray(pixels)).permute(2, 0, 1)
    return _resize(tensor, input_size)


def mask_to_tensor(mask: np.ndarray, input_size: int) -> torch.Tensor:
    tensor = torch.from_numpy(np.asarray(mask, dtype=np.float32))[None]
    return _resize(tensor, input_size)


def _resize(tensor: torch.Tensor, input_size: int) -> torch.Tensor:
    if tensor.shape[-2:] == (input_size, input_size):
        return tensor
    return F.interpolate(tensor[None], size=(input_size, input_size),
                         mode="bilinear", align_corners=True)[0]


def heuristic_masks(image: DocumentImage, block_size: int = 0, offset: int = 10
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Masks for photographs without oracle annotations: a full-frame
    foreground and an adaptive-threshold text mask.
    """
    gray = np.clip(np.round(image.gray() * 255.0), 0, 255).astype(np.uint8)
    if block_size <= 0:
        block_size = max(3, (min(image.height, image.width) // 16) | 1)
    text = cv2.adaptiveThreshold(gray, 255, cv2.ADAPTIVE_THRESH_MEAN_C,
                                 cv2.THRESH_BINARY_INV, block_size, offset)
    foreground = np.ones((image.height, image.width), dtype=np.uint8)
    return foreground, (text > 0).astype(np.uint8)
