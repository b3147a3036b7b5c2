"""
Synthetic-corpus value types: domain tags, warp parameters and the
SampleRecord pairing a warped photo with its flat page and exact mappings.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .mapping_models import DocumentImage, GridMapping


class Layout(Enum):
    """Page layout categories."""
    SINGLE_COLUMN = "single-column"
    TWO_COLUMN = "two-column"
    COMPLEX = "complex"


class Lighting(Enum):
    """Simulated environment lighting."""
    BRIGHT = "bright"
    DIM = "dim"
    WARM = "warm"


class CaptureAngle(Enum):
    FRONTAL = "frontal"
    OBLIQUE = "oblique"


class WarpKind(Enum):
    """Deformation families."""
    CURVE = "curve"
    FOLD = "fold"
    CRUMPLE = "crumple"


MAX_AMPLITUDE = 0.15

DOMAIN_AXES = ("layout", "lighting", "angle", "warp_kind")


@dataclass
class WarpSpec:
    """
    Parameters of one synthetic deformation.

    `shape` is kind-specific: sinusoid cycles for curves, number of creases
    for folds, roughness in (0, 1] for crumples.
    """
    kind: WarpKind
    amplitude: float
    shape: float
    seed: int

    def __post_init__(self):
        if not isinstance(self.kind, WarpKind):
            self.kind = WarpKind(self.kind)
        if not 0.0 <= self.amplitude <= MAX_AMPLITUDE:
            raise InvalidArgumentError(
                f"amplitude must lie in [0, {MAX_AMPLITUDE}], got {self.amplitude}"
            )
        if self.kind == WarpKind.FOLD and int(self.shape) < 1:
            raise InvalidArgumentError("fold count must be at least 1")
        if self.kind == WarpKind.CRUMPLE and not 0.0 < self.shape <= 1.0:
            raise InvalidArgumentError("crumple roughness must lie in (0, 1]")
        if self.kind == WarpKind.CURVE and self.shape <= 0.0:
            raise InvalidArgumentError("curve frequency must be positive")


@dataclass(frozen=True)
class DomainTags:
    layout: Layout
    lighting: Lighting
    angle: CaptureAngle
    warp_kind: WarpKind

    def as_dict(self) -> Dict[str, str]:
        return {
            "layout": self.layout.value,
            "lighting": self.lighting.value,
            "angle": self.angle.value,
            "warp_kind": self.warp_kind.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, str]) -> "DomainTags":
        return cls(
            layout=Layout(data["layout"]),
            lighting=Lighting(data["lighting"]),
            angle=CaptureAngle(data["angle"]),
            warp_kind=WarpKind(data["warp_kind"]),
        )


def domain_cross_product(layouts: Optional[List[Layout]] = None) -> List[DomainTags]:
    """Every domain combination in a fixed, sorted order."""
    layouts = layouts or list(Layout)
    return [
        DomainTags(layout, lighting, angle, kind)
        for layout, lighting, angle, kind in itertools.product(
            layouts, list(Lighting), list(CaptureAngle), list(WarpKind)
        )
    ]


@dataclass
class SampleRecord:
    """One synthetic training/evaluation pair with exact ground truth."""
    id: str
    warped: DocumentImage
    flat: DocumentImage
    gt_map_latent: GridMapping
    gt_map_full: GridMapping
    fg_mask: np.ndarray
    textline_mask: np.ndarray
    domains: DomainTags
    amplitude: float
    seed: int

    def __post_init__(self):
        for name in ("fg_mask", "textline_mask"):
            mask = np.asarray(getattr(self, name))
            if mask.shape != (self.warped.height, self.warped.width):
                raise InvalidArgumentError(
                    f"{name} shape {mask.shape} does not match warped image"
                )
            if not np.isin(mask, (0, 1)).all():
                raise InvalidArgumentError(f"{name} must be {{0,1}}-valued")
            setattr(self, name, mask.astype(np.uint8))

    @property
    def size(self) -> Tuple[int, int]:
        return self.flat.height, self.flat.width

    def meta(self) -> Dict[str, object]:
        return {
            "id": self.id,
            **self.domains.as_dict(),
            "amplitude": float(self.amplitude),
            "seed": int(self.seed),
        }
