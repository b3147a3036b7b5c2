"""
Run configuration models.
Serializable with JSON keys equal to field names; every artifact embeds the
hash of the resolved configuration.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

STREAM_NAMES = ("image", "foreground", "textline", "refinement")


class NetConfig(BaseModel):
    """Denoiser network shape."""
    model_config = ConfigDict(extra="forbid")

    latent_size: int = Field(32, ge=2)
    dim: int = Field(64, ge=2)
    n_ceb: int = 4
    n_fgb: int = 2
    n_heads: int = Field(4, ge=1)
    time_dim: int = Field(64, ge=2)
    feat_dim: int = Field(32, ge=1)
    input_size: int = Field(256, ge=16)
    mlp_ratio: float = Field(4.0, gt=0.0)

    @field_validator("n_ceb", "n_fgb")
    @classmethod
    def _positive_blocks(cls, value: int) -> int:
        if value < 1:
            raise ValueError("block counts must be at least 1")
        return value

    @model_validator(mode="after")
    def _heads_divide_width(self) -> "NetConfig":
        if self.dim % self.n_heads:
            raise ValueError(f"dim {self.dim} is not divisible by n_heads {self.n_heads}")
        if self.dim % 4:
            raise ValueError(f"dim {self.dim} must be a multiple of 4 for 2-D position embeddings")
        if self.latent_size > self.input_size:
            raise ValueError(f"latent_size {self.latent_size} exceeds input_size {self.input_size}")
        return self

    @classmethod
    def toy(cls, **overrides) -> "NetConfig":
        return cls(**{"latent_size": 32, "dim": 64, "n_ceb": 4, "n_fgb": 2,
                      "n_heads": 4, "time_dim": 64, **overrides})

    @classmethod
    def full_scale(cls, **overrides) -> "NetConfig":
        return cls(**{"latent_size": 64, "dim": 384, "n_ceb": 12, "n_fgb": 6,
                      "n_heads": 6, "time_dim": 256, "feat_dim": 64, **overrides})


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: int = Field(1000, ge=1)
    beta_start: float = 1e-4
    beta_end: float = 0.02
    eta: float = Field(0.0, ge=0.0)


class TrainingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(8, ge=1)
    updates: int = Field(20000, ge=0)
    lr: float = Field(1e-4, gt=0.0)
    grad_clip: float = Field(1.0, gt=0.0)
    rollout_steps: int = Field(3, ge=1)
    rollout_clamp: float = Field(1.5, gt=0.0)
    tvcr: bool = True
    disabled_streams: List[str] = Field(default_factory=list)
    log_every: int = Field(10, ge=1)
    ckpt_every: int = Field(1000, ge=1)

    @field_validator("disabled_streams")
    @classmethod
    def _known_streams(cls, value: List[str]) -> List[str]:
        unknown = sorted(set(value) - set(STREAM_NAMES))
        if unknown:
            raise ValueError(f"unknown condition streams: {unknown}")
        return sorted(set(value))

    def zeroed_streams(self) -> List[str]:
        streams = set(self.disabled_streams)
        if not self.tvcr:
            streams.add("refinement")
        return sorted(streams)


class SamplingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(3, ge=1)
    dual_hypothesis: bool = True
    eta: Optional[float] = None


class OcrConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    endpoint: Optional[str] = None
    timeout_seconds: float = Field(30.0, gt=0.0)
    max_concurrency: int = Field(2, ge=1)
    max_retries: int = Field(2, ge=0)
    prompt: str = "OCR the plain text"


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    flow_backend: str = "dis"
    max_side: int = Field(512, ge=32)
    full_resolution: bool = False
    area_normalize: Optional[int] = None
    border_px: int = Field(8, ge=0)
    text_backend: str = "tesseract"
    ocr: OcrConfig = Field(default_factory=OcrConfig)

    @field_validator("flow_backend")
    @classmethod
    def _known_backend(cls, value: str) -> str:
        if value not in ("dis", "farneback"):
            raise ValueError(f"unknown flow backend: {value}")
        return value

    @field_validator("text_backend")
    @classmethod
    def _known_text_backend(cls, value: str) -> str:
        if value not in ("tesseract", "none"):
            raise ValueError(f"unknown text backend: {value}")
        return value


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(48, ge=1)
    size: int = Field(128, ge=64)
    layouts: List[str] = Field(
        default_factory=lambda: ["single-column", "two-column", "complex"]
    )
    workers: int = Field(1, ge=1)


class RunConfig(BaseModel):
    """Fully resolved configuration of one run."""
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    train_data: Optional[str] = None
    test_data: Optional[str] = None
    net: NetConfig = Field(default_factory=NetConfig.toy)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @property
    def latent_size(self) -> int:
        return self.net.latent_size
