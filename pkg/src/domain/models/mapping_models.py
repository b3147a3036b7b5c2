"""
Geometry value types: backward mappings and document images.

Coordinates are normalized to [-1, 1] with the corner-aligned convention:
(-1, -1) is the centre of the top-left pixel of the source image and
(+1, +1) the centre of the bottom-right pixel.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

# float32 resampling roundoff
_PIXEL_TOL = 1e-6


@dataclass
class GridMapping:
    """A height x width grid of (x, y) source coordinates."""
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise InvalidArgumentError(
                f"GridMapping coords must be height x width x 2, got {coords.shape}"
            )
        if coords.shape[0] == 0 or coords.shape[1] == 0:
            raise InvalidArgumentError("GridMapping must not be zero-sized")
        self.coords = coords

    @property
    def height(self) -> int:
        return int(self.coords.shape[0])

    @property
    def width(self) -> int:
        return int(self.coords.shape[1])

    def in_range(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coords) <= 1.0 + tol))

    def astype(self, dtype) -> "GridMapping":
        return GridMapping(self.coords.astype(dtype))

    def to_channels_first(self) -> np.ndarray:
        """(2, height, width) view used by the diffusion latent."""
        return np.ascontiguousarray(np.transpose(self.coords, (2, 0, 1)))

    @classmethod
    def from_channels_first(cls, values: np.ndarray) -> "GridMapping":
        return cls(np.ascontiguousarray(np.transpose(np.asarray(values), (1, 2, 0))))


@dataclass
class DocumentImage:
    """Pixels in [0, 1], height x width x channels with channels 1 or 3."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
            raise InvalidArgumentError(
                f"DocumentImage must be height x width x {{1,3}}, got {pixels.shape}"
            )
        if pixels.shape[0] == 0 or pixels.shape[1] == 0:
            raise InvalidArgumentError("DocumentImage must not be zero-sized")
        low, high = float(np.min(pixels)), float(np.max(pixels))
        if not (-_PIXEL_TOL <= low and high <= 1.0 + _PIXEL_TOL):
            raise InvalidArgumentError(
                f"DocumentImage pixels must lie in [0, 1], got [{low:.4g}, {high:.4g}]"
            )
        self.pixels = pixels

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[2])

    def gray(self) -> np.ndarray:
        """Luma (ITU-R BT.601) as a height x width float64 array."""
        px = self.pixels.astype(np.float64)
        if self.channels == 1:
            return px[:, :, 0]
        return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
