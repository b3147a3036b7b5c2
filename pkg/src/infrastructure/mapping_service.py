"""
Mapping Service
Backward-mapping geometry: application (bilinear sampling), resampling,
inversion and composition of GridMappings.

All functions are pure. Arithmetic runs in float64 torch on the CPU unless
the caller passes tensors on another device.
"""

import logging

import numpy as np
import torch
import torch.nn.functional as F

from ..domain.models.errors import ConvergenceError, InvalidArgumentError
from ..domain.models.mapping_models import DocumentImage, GridMapping

logger = logging.getLogger(__name__)

# Coordinate used to mark lookups that leave the source frame.
OUT_OF_FRAME = -2.0

_RANGE_EPS = 1e-6


def identity_mapping(height: int, width: int, dtype=np.float64) -> GridMapping:
    """coords[u, v] = (2v/(width-1) - 1, 2u/(height-1) - 1)."""
    if height < 1 or width < 1:
        raise InvalidArgumentError(f"invalid mapping size {height}x{width}")
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    return GridMapping(np.stack([gx, gy], axis=-1).astype(dtype))


def sample_grid(src: torch.Tensor, grid: torch.Tensor, fill: float = 0.0) -> torch.Tensor:
    """
    Batched backward warp: out[b, :, u, v] = bilinear sample of src[b] at grid[b, u, v].

    Args:
        src: (batch, channels, H, W) source values
        grid: (batch, h, w, 2) normalized (x, y) lookups
        fill: value returned where any lookup component leaves [-1, 1]

    Returns:
        (batch, channels, h, w) sampled values
    """
    grid = grid.to(dtype=src.dtype)
    out = F.grid_sample(src, grid, mode="bilinear", padding_mode="border", align_corners=True)
    outside = (grid.abs() > 1.0 + _RANGE_EPS).any(dim=-1, keepdim=True)
    return torch.where(outside.permute(0, 3, 1, 2), torch.full_like(out, fill), out)


def warp_features(features: torch.Tensor, mapping: torch.Tensor, fill: float = 0.0) -> torch.Tensor:
    """Dewarp a feature grid with a channels-first latent mapping (batch, 2, h, w)."""
    return sample_grid(features, mapping.permute(0, 2, 3, 1), fill)


def _image_tensor(image: DocumentImage) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image.pixels, dtype=np.float64)).permute(2, 0, 1)[None]


def _mapping_tensor(mapping: GridMapping) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(mapping.coords, dtype=np.float64))[None]


def apply_backward_mapping(src: DocumentImage, mapping: GridMapping,
                           fill: float = 0.0) -> DocumentImage:
    """
    Dewarp `src` with a backward mapping; the mapping's size is the output size.
    """
    out = sample_grid(_image_tensor(src), _mapping_tensor(mapping), fill)
    pixels = out[0].permute(1, 2, 0).numpy()
    return DocumentImage(np.clip(pixels, 0.0, 1.0).astype(src.pixels.dtype, copy=False))


def _resample(mapping: GridMapping, out_h: int, out_w: int) -> GridMapping:
    values = torch.from_numpy(mapping.astype(np.float64).to_channels_first())[None]
    out = F.interpolate(values, size=(out_h, out_w), mode="bilinear", align_corners=True)
    return GridMapping.from_channels_first(out[0].numpy())


def upsample_mapping(mapping: GridMapping, out_h: int, out_w: int) -> GridMapping:
    """Corner-aligned bilinear upsampling; output corners equal input corners."""
    if out_h < mapping.height or out_w < mapping.width:
        raise InvalidArgumentError(
            f"upsample_mapping cannot shrink {mapping.height}x{mapping.width} "
            f"to {out_h}x{out_w}; use downsample_mapping"
        )
    return _resample(mapping, out_h, out_w)


def downsample_mapping(mapping: GridMapping, out_h: int, out_w: int) -> GridMapping:
    """Samples the mapping at the corner-aligned lattice of the smaller grid."""
    if out_h > mapping.height or out_w > mapping.width:
        raise InvalidArgumentError(
            f"downsample_mapping cannot grow {mapping.height}x{mapping.width} "
            f"to {out_h}x{out_w}; use upsample_mapping"
        )
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"invalid target size {out_h}x{out_w}")
    return _resample(mapping, out_h, out_w)


def compose_mappings(outer: GridMapping, inner: GridMapping) -> GridMapping:
    """result[u, v] = outer sampled at inner[u, v]; lookups out of frame yield OUT_OF_FRAME."""
    values = torch.from_numpy(outer.astype(np.float64).to_channels_first())[None]
    out = sample_grid(values, _mapping_tensor(inner), fill=OUT_OF_FRAME)
    return GridMapping.from_channels_first(out[0].numpy())


def _sample_displacement(disp: torch.Tensor, at: torch.Tensor) -> torch.Tensor:
    # border clamping extrapolates the displacement, not the coordinates
    out = F.grid_sample(disp.permute(0, 3, 1, 2), at, mode="bilinear",
                        padding_mode="border", align_corners=True)
    return out.permute(0, 2, 3, 1)


def _interior(values: torch.Tensor) -> torch.Tensor:
    if values.shape[1] > 2 and values.shape[2] > 2:
        return values[:, 1:-1, 1:-1]
    return values


def mapping_residual(fwd: GridMapping, inv: GridMapping) -> float:
    """Interior max-norm of fwd(inv) - identity."""
    fwd_t = _mapping_tensor(fwd)
    inv_t = _mapping_tensor(inv)
    ident = _mapping_tensor(identity_mapping(inv.height, inv.width))
    ident_fwd = _mapping_tensor(identity_mapping(fwd.height, fwd.width))
    round_trip = inv_t + _sample_displacement(fwd_t - ident_fwd, inv_t)
    return float(_interior((round_trip - ident).abs()).max())


def invert_mapping(fwd: GridMapping, iters: int = 50, tol: float = 1e-4,
                   damping: float = 1.0) -> GridMapping:
    """
    Invert a smooth bijective deformation by fixed-point iteration on the
    displacement: inv_{k+1} = identity - disp(inv_k).

    Raises:
        ConvergenceError: residual above `tol` after `iters` iterations
    """
    if iters < 1:
        raise InvalidArgumentError("iters must be at least 1")
    fwd_t = _mapping_tensor(fwd)
    ident = _mapping_tensor(identity_mapping(fwd.height, fwd.width))
    disp = fwd_t - ident

    inv = ident.clone()
    residual = float("inf")
    for iteration in range(1, iters + 1):
        target = ident - _sample_displacement(disp, inv)
        inv = inv + damping * (target - inv)
        round_trip = inv + _sample_displacement(disp, inv)
        residual = float(_interior((round_trip - ident).abs()).max())
        if residual <= tol:
            logger.debug(f"invert_mapping converged in {iteration} iterations, residual {residual:.2e}")
            return GridMapping(inv[0].numpy())

    logger.error(f"invert_mapping did not converge: residual {residual:.3e} after {iters} iterations")
    raise ConvergenceError("mapping inversion did not converge", residual)


def jacobian_determinant(mapping: GridMapping) -> np.ndarray:
    """Finite-difference Jacobian determinant in normalized units."""
    coords = mapping.coords.astype(np.float64)
    du = 2.0 / max(mapping.height - 1, 1)
    dv = 2.0 / max(mapping.width - 1, 1)
    dx_dv = np.gradient(coords[:, :, 0], dv, axis=1)
    dx_du = np.gradient(coords[:, :, 0], du, axis=0)
    dy_dv = np.gradient(coords[:, :, 1], dv, axis=1)
    dy_du = np.gradient(coords[:, :, 1], du, axis=0)
    return dx_dv * dy_du - dx_du * dy_dv


def footprint(mapping: GridMapping) -> np.ndarray:
    """1 where the lookup lands inside the source frame."""
    return (np.abs(mapping.coords) <= 1.0 + _RANGE_EPS).all(axis=-1).astype(np.uint8)