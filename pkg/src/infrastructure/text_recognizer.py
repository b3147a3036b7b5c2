"""
Local OCR engine for the ED/CER metrics.
"""

import logging
from typing import Optional

import numpy as np
import pytesseract
from PIL import Image

from ..domain.models.errors import MetricUnavailableError
from ..domain.models.mapping_models import DocumentImage
from .metrics.text_distance import char_error_rate, edit_distance

logger = logging.getLogger(__name__)


class TesseractRecognizer:
    """Transcribes images with the tesseract binary through pytesseract."""

    def __init__(self, lang: str = "eng"):
        self.lang = lang
        self._available: Optional[bool] = None

    @property
    def name(self) -> str:
        return "tesseract"

    def available(self) -> bool:
        if self._available is None:
            try:
                version = pytesseract.get_tesseract_version()
                logger.info(f"TesseractRecognizer initialized (tesseract {version})")
                self._available = True
            except (pytesseract.TesseractNotFoundError, OSError) as e:
                logger.warning(f"tesseract not available, ED/CER will be empty: {str(e)}")
                self._available = False
        return self._available

    def transcribe(self, image: DocumentImage) -> str:
        if not self.available():
            raise MetricUnavailableError("tesseract is not installed")
        pixels = np.round(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
        pil = Image.fromarray(pixels[:, :, 0] if image.channels == 1 else pixels)
        try:
            return pytesseract.image_to_string(pil, lang=self.lang).strip()
        except pytesseract.TesseractError as e:
            raise MetricUnavailableError(f"tesseract failed: {e}")


def text_metrics(recognizer, dewarped: DocumentImage, reference: DocumentImage):
    """(ed, cer) of the dewarped transcript against the reference transcript; cer None on an empty reference."""
    hyp = recognizer.transcribe(dewarped)
    ref = recognizer.transcribe(reference)
    ed = float(edit_distance(hyp, ref))
    return ed, (char_error_rate(hyp, ref) if ref else None)
