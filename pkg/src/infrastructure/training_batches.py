"""
Stacks SampleRecords into the tensors the network and the trainer consume.
Images stay at their stored resolution; the feature extractor resizes per batch.
"""

import logging
from typing import Sequence

import numpy as np
import torch

from ..domain.models.diffusion_models import TrainingBatch
from ..domain.models.errors import InvalidArgumentError
from ..domain.models.sample_models import SampleRecord
from .mapping_service import downsample_mapping

logger = logging.getLogger(__name__)


def latent_target(record: SampleRecord, latent_size: int) -> np.ndarray:
    """(2, latent, latent) ground truth; resampled from the full map when sizes differ."""
    mapping = record.gt_map_latent
    if mapping.height != latent_size or mapping.width != latent_size:
        mapping = downsample_mapping(record.gt_map_full, latent_size, latent_size)
    return mapping.to_channels_first().astype(np.float32)


def stack_records(records: Sequence[SampleRecord], latent_size: int) -> TrainingBatch:
    if not records:
        raise InvalidArgumentError("no records to stack")
    shape = (records[0].warped.height, records[0].warped.width)
    mismatched = [r.id for r in records if (r.warped.height, r.warped.width) != shape]
    if mismatched:
        raise InvalidArgumentError(f"records differ in image size from {shape}: {mismatched[:5]}")

    def _rgb(record: SampleRecord) -> np.ndarray:
        pixels = record.warped.pixels.astype(np.float32)
        if pixels.shape[2] == 1:
            pixels = np.repeat(pixels, 3, axis=2)
        return np.transpose(pixels, (2, 0, 1))

    images = torch.from_numpy(np.stack([_rgb(r) for r in records]))
    fg = torch.from_numpy(np.stack([r.fg_mask.astype(np.float32) for r in records]))[:, None]
    tl = torch.from_numpy(np.stack([r.textline_mask.astype(np.float32) for r in records]))[:, None]
    m0 = torch.from_numpy(np.stack([latent_target(r, latent_size) for r in records]))
    logger.debug(f"Stacked {len(records)} records: images {tuple(images.shape)}, m0 {tuple(m0.shape)}")
    return TrainingBatch(images=images, fg_masks=fg, textline_masks=tl, m0=m0)


def select(batch: TrainingBatch, indices: np.ndarray, device=None) -> TrainingBatch:
    index = torch.as_tensor(np.asarray(indices), dtype=torch.long)
    return TrainingBatch(
        images=batch.images[index].to(device),
        fg_masks=batch.fg_masks[index].to(device),
        textline_masks=batch.textline_masks[index].to(device),
        m0=batch.m0[index].to(device),
    )
