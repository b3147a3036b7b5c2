from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

METRIC_NAMES = ("ms_ssim", "ld", "ad", "ed", "cer", "mmed", "mmcer")


class SampleMetrics(BaseModel):
    """Metric values of one sample; None marks an unavailable metric."""
    ms_ssim: Optional[float] = None
    ld: Optional[float] = None
    ad: Optional[float] = None
    ed: Optional[float] = None
    cer: Optional[float] = None
    mmed: Optional[float] = None
    mmcer: Optional[float] = None
    errors: List[str] = Field(default_factory=list)

    @field_validator("ms_ssim")
    @classmethod
    def _unit_range(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not 0.0 <= value <= 1.0:
            raise ValueError(f"ms_ssim out of [0, 1]: {value}")
        return value

    @field_validator("ld", "ad", "ed", "cer", "mmed", "mmcer")
    @classmethod
    def _non_negative(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0.0:
            raise ValueError(f"metric must be non-negative: {value}")
        return value

    def values(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


class AggregateRow(BaseModel):
    """Means of every metric over one group of samples."""
    group: Dict[str, str]
    count: int
    means: Dict[str, Optional[float]]
    counts: Dict[str, int]


class ReportMeta(BaseModel):
    config_hash: str
    generated_at: str
    flow_backend: str
    ocr_backend: Optional[str] = None
    extra: Dict[str, str] = Field(default_factory=dict)


class MetricReport(BaseModel):
    per_sample: Dict[str, SampleMetrics]
    domains: Dict[str, Dict[str, str]]
    combinations: List[AggregateRow]
    marginals: Dict[str, List[AggregateRow]]
    overall: AggregateRow
    meta: ReportMeta
