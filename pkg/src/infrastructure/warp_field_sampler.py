"""
Warp Field Sampler
Parametric forward deformation fields for the three warp families.

A forward field F maps flat-page coordinates to warped-image coordinates,
F(q) = q + d(q). Each displacement component is windowed by (1 - q_k^2)
along its own axis, so the page border stays on the frame border, and then
rescaled so that max |d| equals the requested amplitude.
"""

import logging
import math
from typing import Tuple

import numpy as np
from scipy import ndimage

from ..domain.models.errors import GenerationError
from ..domain.models.mapping_models import GridMapping
from ..domain.models.sample_models import WarpKind, WarpSpec
from .mapping_service import identity_mapping, jacobian_determinant

logger = logging.getLogger(__name__)

MAX_RETRIES = 10
RETRY_SHRINK = 0.7
# contraction keeps fixed-point inversion convergent and limits page compression
MAX_DISPLACEMENT_SLOPE = 0.5


def _curve(grid: np.ndarray, spec: WarpSpec, rng: np.random.Generator) -> np.ndarray:
    phase = rng.uniform(0.0, 2.0 * math.pi)
    along = int(rng.integers(0, 2))
    disp = np.zeros_like(grid)
    other = 1 - along
    disp[:, :, other] = np.sin(math.pi * spec.shape * (grid[:, :, along] + 1.0) + phase)
    return disp


def _fold(grid: np.ndarray, spec: WarpSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    disp = np.zeros_like(grid)
    for _ in range(int(spec.shape)):
        theta = rng.uniform(0.0, math.pi)
        normal = np.array([math.cos(theta), math.sin(theta)])
        offset = rng.uniform(-0.6, 0.6)
        width = rng.uniform(0.3, 0.8)
        direction = rng.standard_normal(2)
        direction /= np.linalg.norm(direction) + 1e-12
        distance = grid @ normal - offset
        ridge = np.maximum(0.0, 1.0 - np.abs(distance) / width)
        disp += ridge[:, :, None] * direction[None, None, :] * rng.uniform(0.5, 1.0)
    sigma = max(1.0, size * 0.02)
    for k in range(2):
        disp[:, :, k] = ndimage.gaussian_filter(disp[:, :, k], sigma, mode="nearest")
    return disp


def _crumple(grid: np.ndarray, spec: WarpSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    sigma = size * (0.25 - 0.18 * spec.shape)
    noise = rng.standard_normal(grid.shape)
    disp = np.zeros_like(grid)
    for k in range(2):
        disp[:, :, k] = ndimage.gaussian_filter(noise[:, :, k], sigma, mode="reflect")
    return disp


def _raw_displacement(spec: WarpSpec, size: int, grid: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == WarpKind.CURVE:
        return _curve(grid, spec, rng)
    if spec.kind == WarpKind.FOLD:
        return _fold(grid, spec, rng, size)
    return _crumple(grid, spec, rng, size)


def _shape_displacement(raw: np.ndarray, grid: np.ndarray, amplitude: float) -> np.ndarray:
    disp = raw * (1.0 - grid ** 2)
    peak = float(np.abs(disp).max())
    if peak == 0.0:
        return np.zeros_like(disp)
    return disp * (amplitude / peak)


def _displacement_slope(disp: np.ndarray) -> float:
    height, width = disp.shape[:2]
    du = 2.0 / max(height - 1, 1)
    dv = 2.0 / max(width - 1, 1)
    total = np.zeros(disp.shape[:2])
    for k in range(2):
        total += np.gradient(disp[:, :, k], dv, axis=1) ** 2
        total += np.gradient(disp[:, :, k], du, axis=0) ** 2
    return float(np.sqrt(total).max())


def sample_accepted_field(spec: WarpSpec, size: int) -> Tuple[GridMapping, float]:
    """
    Sample a field, shrinking the amplitude until it is bijective.

    Returns:
        (forward field, amplitude actually used)

    Raises:
        GenerationError: no bijective field after MAX_RETRIES shrinks
    """
    grid = identity_mapping(size, size).coords
    if spec.amplitude == 0.0:
        return GridMapping(grid.copy()), 0.0

    raw = _raw_displacement(spec, size, grid)
    amplitude = spec.amplitude
    for attempt in range(MAX_RETRIES + 1):
        disp = _shape_displacement(raw, grid, amplitude)
        field = GridMapping(grid + disp)
        min_det = float(jacobian_determinant(field).min())
        slope = _displacement_slope(disp)
        if min_det > 0.0 and slope < MAX_DISPLACEMENT_SLOPE:
            if attempt:
                logger.info(f"Accepted {spec.kind.value} field after {attempt} shrinks, "
                            f"amplitude {amplitude:.4f}")
            return field, amplitude
        logger.debug(f"Rejected {spec.kind.value} field: min det {min_det:.3f}, slope {slope:.3f}")
        amplitude *= RETRY_SHRINK

    raise GenerationError(
        f"could not make a bijective {spec.kind.value} field (seed {spec.seed}) "
        f"after {MAX_RETRIES} retries"
    )


def sample_forward_field(spec: WarpSpec, size: int) -> GridMapping:
    """Smooth bijective forward field of the given kind at size x size."""
    field, _ = sample_accepted_field(spec, size)
    return field
