"""
Edit Distance and Character Error Rate between OCR transcripts.
"""

import editdistance

from ...domain.models.errors import InvalidArgumentError


def edit_distance(hyp: str, ref: str) -> int:
    """Levenshtein distance with unit costs."""
    return int(editdistance.eval(hyp, ref))


def char_error_rate(hyp: str, ref: str) -> float:
    """Edit distance normalized by the reference length."""
    if not ref:
        raise InvalidArgumentError("character error rate is undefined for an empty reference")
    return edit_distance(hyp, ref) / len(ref)
