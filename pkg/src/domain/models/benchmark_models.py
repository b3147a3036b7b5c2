from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, Field

from .sample_models import DOMAIN_AXES

UNKNOWN_DOMAIN = "unknown"


class BenchmarkLayout(Enum):
    """Directory conventions of external dewarping benchmarks."""
    DOCUNET_STYLE = "docunet_style"
    DIR300_STYLE = "dir300_style"


class EvalPair(BaseModel):
    """One distorted photo and its flat ground-truth scan."""
    id: str
    distorted: str
    gt: str
    domains: Dict[str, str] = Field(
        default_factory=lambda: {axis: UNKNOWN_DOMAIN for axis in DOMAIN_AXES}
    )


class PairsManifest(BaseModel):
    schema_version: int = 1
    layout: str
    source: str
    pairs: List[EvalPair]
