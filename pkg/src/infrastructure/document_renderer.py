"""
Document Renderer
Draws synthetic flat pages: light paper with dark word bars arranged in
text lines, plus the text-line mask of those bars.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from ..domain.models.errors import InvalidArgumentError
from ..domain.models.mapping_models import DocumentImage
from ..domain.models.sample_models import Layout

logger = logging.getLogger(__name__)

MIN_SIZE = 64
SCAN_BLUR = 1.0


class _Canvas:
    """Mutable page being drawn, with its text-line mask."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        paper = rng.uniform(0.88, 0.97)
        tint = rng.uniform(-0.02, 0.02, size=3)
        grain = ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.5) * 0.02
        self.pixels = np.clip(paper + tint[None, None, :] + grain[:, :, None], 0.0, 1.0)
        self.mask = np.zeros((size, size), dtype=np.uint8)
        self.ink = rng.uniform(0.05, 0.2)
        self.line_height = max(2, int(round(size * rng.uniform(0.018, 0.026))))
        self.line_gap = max(2, int(round(self.line_height * rng.uniform(0.8, 1.4))))

    def word(self, y: int, x: int, width: int, height: int) -> None:
        """Ink bar with vertical strokes, marked in the text-line mask."""
        width = min(width, self.size - x)
        height = min(height, self.size - y)
        if width <= 0 or height <= 0:
            return
        period = max(4, height // 2 + 2)
        strokes = (np.arange(width) % period) < max(1, period - 1)
        shade = np.where(strokes, self.ink, self.ink + 0.35)[None, :, None]
        self.pixels[y:y + height, x:x + width, :] = shade
        self.mask[y:y + height, x:x + width] = 1

    def block(self, y0: int, y1: int, x0: int, x1: int, value: float) -> None:
        """Non-text graphic (figure or table shading)."""
        self.pixels[y0:y1, x0:x1, :] = value

    def text_column(self, x0: int, x1: int, y0: int, y1: int) -> None:
        rng = self.rng
        lh, gap = self.line_height, self.line_gap
        y = y0
        while y + lh <= y1:
            paragraph_end = rng.random() < 0.15
            line_end = x1 if not paragraph_end else x0 + int((x1 - x0) * rng.uniform(0.3, 0.8))
            x = x0
            while x < line_end:
                width = int(rng.integers(max(2, int(lh * 1.5)), max(3, lh * 6)))
                width = min(width, line_end - x)
                if width >= 2:
                    self.word(y, x, width, lh)
                x += width + max(2, int(lh * 0.6))
            y += lh + gap + (lh if paragraph_end else 0)


def _columns(size: int, margin: int, count: int, gutter: int) -> List[Tuple[int, int]]:
    if count == 1:
        return [(margin, size - margin)]
    mid = size // 2
    return [(margin, mid - gutter // 2), (mid + (gutter - gutter // 2), size - margin)]


def gutter_width(size: int) -> int:
    return max(4, int(round(size * 0.06)))


def render_flat_document(layout: Layout, size: int, seed: int) -> Tuple[DocumentImage, np.ndarray]:
    """
    Render a flat page deterministically from `seed`.

    Args:
        layout: page layout category
        size: side length in pixels (square page)
        seed: RNG seed

    Returns:
        (image, textline_mask) with the mask {0,1}-valued, 1 on text bars
    """
    if size < MIN_SIZE:
        raise InvalidArgumentError(f"page size must be at least {MIN_SIZE}, got {size}")
    layout = Layout(layout)
    rng = np.random.default_rng(seed)
    canvas = _Canvas(size, rng)
    margin = max(3, int(round(size * 0.08)))
    gutter = gutter_width(size)

    if layout == Layout.SINGLE_COLUMN:
        for x0, x1 in _columns(size, margin, 1, gutter):
            canvas.text_column(x0, x1, margin, size - margin)
    elif layout == Layout.TWO_COLUMN:
        for x0, x1 in _columns(size, margin, 2, gutter):
            canvas.text_column(x0, x1, margin, size - margin)
    else:
        title_h = canvas.line_height * 2
        title_w = int((size - 2 * margin) * rng.uniform(0.5, 0.9))
        canvas.word(margin, margin, title_w, title_h)
        body_top = margin + title_h + canvas.line_gap * 2
        columns = _columns(size, margin, 2, gutter)
        fig_col = int(rng.integers(0, 2))
        x0, x1 = columns[fig_col]
        fig_bottom = body_top + int((size - body_top - margin) * rng.uniform(0.3, 0.45))
        canvas.block(body_top, fig_bottom, x0, x1, rng.uniform(0.45, 0.7))
        for index, (cx0, cx1) in enumerate(columns):
            top = fig_bottom + canvas.line_gap if index == fig_col else body_top
            canvas.text_column(cx0, cx1, top, size - margin)

    # scan optics blur
    pixels = ndimage.gaussian_filter(canvas.pixels, sigma=(SCAN_BLUR, SCAN_BLUR, 0))
    image = DocumentImage(np.clip(pixels, 0.0, 1.0).astype(np.float32))
    logger.debug(f"Rendered {layout.value} page size={size} seed={seed} "
                 f"text fraction={canvas.mask.mean():.3f}")
    return image, canvas.mask
