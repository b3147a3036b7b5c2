"""
Pair Generator
Builds SampleRecords: warps a flat page with a forward field (optionally
viewed through an oblique projective transform), applies lighting, and
derives the exact ground-truth backward mappings and masks.
"""

import logging
from typing import Optional

import cv2
import numpy as np

from ..domain.models.mapping_models import DocumentImage, GridMapping
from ..domain.models.sample_models import (
    CaptureAngle, DomainTags, Layout, Lighting, SampleRecord, WarpSpec,
)
from .mapping_service import (
    apply_backward_mapping, compose_mappings, downsample_mapping,
    footprint, identity_mapping, invert_mapping,
)
from .warp_field_sampler import sample_accepted_field

logger = logging.getLogger(__name__)

BACKGROUND = 0.2

_LIGHTING = {
    Lighting.BRIGHT: (1.0, (1.0, 1.0, 1.0)),
    Lighting.DIM: (0.72, (1.0, 1.0, 1.0)),
    Lighting.WARM: (0.95, (1.0, 0.9, 0.74)),
}


def relight(image: DocumentImage, lighting: Lighting) -> DocumentImage:
    """Apply the gain and tint of a lighting condition."""
    gain, tint = _LIGHTING[Lighting(lighting)]
    pixels = image.pixels.astype(np.float64) * gain
    if image.channels == 3:
        pixels = pixels * np.asarray(tint)[None, None, :]
    return DocumentImage(np.clip(pixels, 0.0, 1.0).astype(image.pixels.dtype))


def oblique_homography(seed: int) -> np.ndarray:
    """3x3 homography taking the page square to a tilted trapezoid inside the frame."""
    rng = np.random.default_rng(seed)
    inset = 0.92
    tilt = rng.uniform(0.05, 0.12)
    src = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)
    dst = src * inset
    edge = int(rng.integers(0, 4))
    # shrink one edge towards its midpoint: the far side of the page
    if edge == 0:
        dst[[0, 1], 0] *= 1.0 - tilt
    elif edge == 1:
        dst[[1, 2], 1] *= 1.0 - tilt
    elif edge == 2:
        dst[[2, 3], 0] *= 1.0 - tilt
    else:
        dst[[3, 0], 1] *= 1.0 - tilt
    dst += rng.uniform(-0.02, 0.02, size=dst.shape)
    return cv2.getPerspectiveTransform(src.astype(np.float32), dst.astype(np.float32))


def apply_homography(homography: np.ndarray, mapping: GridMapping) -> GridMapping:
    coords = mapping.coords.astype(np.float64)
    flat = coords.reshape(-1, 2)
    projected = cv2.perspectiveTransform(flat[None], homography)[0]
    return GridMapping(projected.reshape(coords.shape))


def generate_pair(
    flat: DocumentImage,
    spec: WarpSpec,
    latent_size: int,
    *,
    layout: Layout = Layout.SINGLE_COLUMN,
    lighting: Lighting = Lighting.BRIGHT,
    angle: CaptureAngle = CaptureAngle.FRONTAL,
    flat_textline: Optional[np.ndarray] = None,
    record_id: str = "",
) -> SampleRecord:
    """
    Warp `flat` and return the record with exact ground truth.

    gt_map_full satisfies flat(q) = warped(gt_map_full(q)) up to lighting.
    Masks are expressed in the warped frame.
    """
    size = flat.height
    field, amplitude = sample_accepted_field(spec, size)
    inverse = invert_mapping(field)

    if CaptureAngle(angle) == CaptureAngle.OBLIQUE:
        homography = oblique_homography(spec.seed + 1)
        gt_full = apply_homography(homography, field)
        page_lookup = apply_homography(np.linalg.inv(homography), identity_mapping(size, size))
        warp_map = compose_mappings(inverse, page_lookup)
    else:
        gt_full = field
        warp_map = inverse

    warped = apply_backward_mapping(flat, warp_map, fill=BACKGROUND)
    warped = relight(warped, lighting)
    fg_mask = footprint(warp_map)

    if flat_textline is None:
        textline = np.zeros((size, size), dtype=np.uint8)
    else:
        mask_image = DocumentImage(flat_textline.astype(np.float64))
        textline = (apply_backward_mapping(mask_image, warp_map, fill=0.0).pixels[:, :, 0] > 0.5)
        textline = textline.astype(np.uint8)

    gt_full = gt_full.astype(np.float32)
    gt_latent = downsample_mapping(gt_full, latent_size, latent_size).astype(np.float32)

    logger.debug(f"Generated pair {record_id}: {spec.kind.value} amplitude {amplitude:.4f}, "
                 f"{Lighting(lighting).value}, {CaptureAngle(angle).value}")
    return SampleRecord(
        id=record_id,
        warped=DocumentImage(warped.pixels.astype(np.float32)),
        flat=DocumentImage(flat.pixels.astype(np.float32)),
        gt_map_latent=gt_latent,
        gt_map_full=gt_full,
        fg_mask=fg_mask,
        textline_mask=textline,
        domains=DomainTags(Layout(layout), Lighting(lighting), CaptureAngle(angle), spec.kind),
        amplitude=amplitude,
        seed=spec.seed,
    )
