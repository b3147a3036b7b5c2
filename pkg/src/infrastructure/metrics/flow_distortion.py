"""
Local and Aligned Distortion from a dense correspondence field between a
dewarped image and its ground truth.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

from ...domain.models.errors import InvalidArgumentError, MetricUnavailableError
from ...domain.models.mapping_models import DocumentImage

logger = logging.getLogger(__name__)

FLOW_BACKENDS = ("dis", "farneback")


@dataclass(frozen=True)
class FlowSettings:
    """Evaluation resolution and valid-region settings for LD/AD."""
    backend: str = "dis"
    max_side: int = 512
    full_resolution: bool = False
    area_normalize: Optional[int] = None
    border_px: int = 8

    def __post_init__(self):
        if self.backend not in FLOW_BACKENDS:
            raise InvalidArgumentError(f"unknown flow backend {self.backend!r}, expected one of {FLOW_BACKENDS}")

    @classmethod
    def from_eval_config(cls, cfg) -> "FlowSettings":
        return cls(
            backend=cfg.flow_backend,
            max_side=cfg.max_side,
            full_resolution=cfg.full_resolution,
            area_normalize=cfg.area_normalize,
            border_px=cfg.border_px,
        )


def _to_uint8(gray: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(gray * 255.0), 0, 255).astype(np.uint8)


def evaluation_size(height: int, width: int, settings: FlowSettings) -> Tuple[int, int]:
    """(height, width) both images are brought to before the flow is computed."""
    if settings.area_normalize:
        scale = math.sqrt(settings.area_normalize / float(height * width))
    elif not settings.full_resolution and max(height, width) > settings.max_side:
        scale = settings.max_side / float(max(height, width))
    else:
        return height, width
    return max(1, int(round(height * scale))), max(1, int(round(width * scale)))


def prepare_pair(dewarped: DocumentImage, gt: DocumentImage,
                 settings: FlowSettings) -> Tuple[np.ndarray, np.ndarray]:
    """Grayscale uint8 arrays at the evaluation resolution derived from the GT size."""
    height, width = evaluation_size(gt.height, gt.width, settings)
    pair = []
    for image in (dewarped, gt):
        gray = _to_uint8(image.gray())
        if gray.shape != (height, width):
            interpolation = cv2.INTER_AREA if gray.shape[0] * gray.shape[1] > height * width else cv2.INTER_LINEAR
            gray = cv2.resize(gray, (width, height), interpolation=interpolation)
        pair.append(gray)
    return pair[0], pair[1]


def compute_flow(source: np.ndarray, target: np.ndarray, backend: str = "dis") -> np.ndarray:
    """
    Dense flow (H, W, 2) in pixels, (dx, dy) order: source(y, x) matches
    target(y + dy, x + dx).

    Raises:
        MetricUnavailableError: the backend failed on this pair
    """
    try:
        if backend == "dis":
            dis = cv2.DISOpticalFlow_create(cv2.DISOPTICAL_FLOW_PRESET_MEDIUM)
            flow = dis.calc(source, target, None)
        elif backend == "farneback":
            flow = cv2.calcOpticalFlowFarneback(source, target, None, 0.5, 4, 15, 5, 5, 1.2, 0)
        else:
            raise InvalidArgumentError(f"unknown flow backend {backend!r}")
    except cv2.error as e:
        logger.error(f"Flow backend {backend} failed: {str(e)}")
        raise MetricUnavailableError(f"{backend} flow failed: {e}")
    flow = np.asarray(flow, dtype=np.float64)
    if not np.isfinite(flow).all():
        raise MetricUnavailableError(f"{backend} flow produced non-finite values")
    return flow


def valid_region(flow: np.ndarray, border_px: int) -> np.ndarray:
    """Pixels outside the border band whose flow target stays in the frame."""
    height, width = flow.shape[:2]
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    tx = xs + flow[..., 0]
    ty = ys + flow[..., 1]
    valid = (tx >= 0) & (tx <= width - 1) & (ty >= 0) & (ty <= height - 1)
    if border_px > 0:
        band = np.zeros_like(valid)
        band[border_px:height - border_px, border_px:width - border_px] = True
        valid &= band
    return valid


def _require_valid(valid: np.ndarray) -> None:
    if not valid.any():
        raise MetricUnavailableError("no valid pixels left after border and frame exclusion")


def local_distortion_from_flow(flow: np.ndarray, border_px: int = 8) -> float:
    valid = valid_region(flow, border_px)
    _require_valid(valid)
    magnitude = np.hypot(flow[..., 0], flow[..., 1])
    return float(magnitude[valid].mean())


def fit_similarity(points: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Least-squares isotropic scale and translation with targets ≈ s * points + t."""
    p_mean = points.mean(axis=0)
    q_mean = targets.mean(axis=0)
    p_c = points - p_mean
    q_c = targets - q_mean
    denom = float((p_c * p_c).sum())
    scale = float((p_c * q_c).sum()) / denom if denom > 0 else 1.0
    return scale, q_mean - scale * p_mean


def gradient_weights(gt_gray: np.ndarray) -> np.ndarray:
    gray = gt_gray.astype(np.float64) / 255.0
    gx = cv2.Sobel(gray, cv2.CV_64F, 1, 0, ksize=3)
    gy = cv2.Sobel(gray, cv2.CV_64F, 0, 1, ksize=3)
    return np.hypot(gx, gy)


def aligned_distortion_from_flow(flow: np.ndarray, gt_gray: np.ndarray, border_px: int = 8) -> float:
    """
    Residual flow magnitude after removing the best global similarity,
    averaged with weights from the normalized GT gradient magnitude.
    Falls back to uniform weights on a flat GT.
    """
    valid = valid_region(flow, border_px)
    _require_valid(valid)
    ys, xs = np.nonzero(valid)
    points = np.stack([xs, ys], axis=1).astype(np.float64)
    targets = points + flow[ys, xs]
    scale, shift = fit_similarity(points, targets)
    residual = targets - (scale * points + shift)
    magnitude = np.hypot(residual[:, 0], residual[:, 1])

    weights = gradient_weights(gt_gray)[ys, xs]
    total = float(weights.sum())
    if total <= 0.0:
        return float(magnitude.mean())
    return float((weights * magnitude).sum() / total)


def distortion_metrics(dewarped: DocumentImage, gt: DocumentImage,
                       settings: Optional[FlowSettings] = None) -> Tuple[float, float]:
    """(LD, AD) in evaluation-resolution pixels from one flow computation."""
    settings = settings or FlowSettings()
    source, target = prepare_pair(dewarped, gt, settings)
    flow = compute_flow(source, target, settings.backend)
    ld = local_distortion_from_flow(flow, settings.border_px)
    ad = aligned_distortion_from_flow(flow, target, settings.border_px)
    logger.debug(f"Distortion at {source.shape}: ld={ld:.4f} ad={ad:.4f}")
    return ld, ad


def local_distortion(dewarped: DocumentImage, gt: DocumentImage, flow_backend: str = "dis",
                     settings: Optional[FlowSettings] = None) -> float:
    """Mean correspondence magnitude (pixels) from `dewarped` to `gt`."""
    settings = settings or FlowSettings(backend=flow_backend)
    source, target = prepare_pair(dewarped, gt, settings)
    return local_distortion_from_flow(compute_flow(source, target, settings.backend), settings.border_px)


def aligned_distortion(dewarped: DocumentImage, gt: DocumentImage, flow_backend: str = "dis",
                       settings: Optional[FlowSettings] = None) -> float:
    settings = settings or FlowSettings(backend=flow_backend)
    source, target = prepare_pair(dewarped, gt, settings)
    flow = compute_flow(source, target, settings.backend)
    return aligned_distortion_from_flow(flow, target, settings.border_px)
