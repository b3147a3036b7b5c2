"""
Diffusion value types: the noise schedule tables and the compound condition.
Latent grids are torch tensors of shape (batch, 2, h, w); feature grids are
(batch, channels, h, w).
"""

from dataclasses import dataclass, replace
from typing import Iterable, Optional

import torch

LatentGrid = torch.Tensor
FeatureGrid = torch.Tensor


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Tables indexed by timestep 0..T (index 0 is the clean state).
    beta[0] is unused and alpha_bar[0] is 1.
    """
    T: int
    beta: torch.Tensor
    alpha_bar: torch.Tensor
    sigma: torch.Tensor
    eta: float

    def ab(self, t: int) -> float:
        return float(self.alpha_bar[t])

    def sigma_between(self, t: int, t_prev: int) -> float:
        """DDIM sigma for a (possibly strided) step t -> t_prev."""
        if self.eta == 0.0:
            return 0.0
        ab_t, ab_prev = self.ab(t), self.ab(t_prev)
        return float(
            self.eta
            * ((1.0 - ab_prev) / (1.0 - ab_t)) ** 0.5
            * (1.0 - ab_t / ab_prev) ** 0.5
        )


@dataclass
class TimeVariantCondition:
    """r_t = {m_0|t, f_0|t}; both payloads are zero grids when not valid."""
    m_prev: torch.Tensor
    f_dewarped: torch.Tensor
    valid: bool

    @classmethod
    def empty(cls, batch: int, latent_size: int, feat_dim: int,
              device=None, dtype=torch.float32) -> "TimeVariantCondition":
        return cls(
            m_prev=torch.zeros(batch, 2, latent_size, latent_size, device=device, dtype=dtype),
            f_dewarped=torch.zeros(batch, feat_dim, latent_size, latent_size,
                                   device=device, dtype=dtype),
            valid=False,
        )


@dataclass
class ConditionBundle:
    """c_t = {f_d, f_m, f_l, r_t}."""
    f_d: FeatureGrid
    f_m: FeatureGrid
    f_l: FeatureGrid
    r_t: TimeVariantCondition

    def with_refinement(self, r_t: TimeVariantCondition) -> "ConditionBundle":
        return replace(self, r_t=r_t)

    def ablate(self, streams: Optional[Iterable[str]]) -> "ConditionBundle":
        """
        Zero the named streams (image, foreground, textline, refinement).

        f_0|t is f_d dewarped, so dropping "image" zeroes it too.
        """
        streams = set(streams or ())
        if not streams:
            return self
        bundle = replace(
            self,
            f_d=torch.zeros_like(self.f_d) if "image" in streams else self.f_d,
            f_m=torch.zeros_like(self.f_m) if "foreground" in streams else self.f_m,
            f_l=torch.zeros_like(self.f_l) if "textline" in streams else self.f_l,
        )
        if "image" in streams:
            bundle = bundle.with_refinement(replace(
                self.r_t, f_dewarped=torch.zeros_like(self.r_t.f_dewarped)))
        if "refinement" in streams:
            bundle = bundle.with_refinement(TimeVariantCondition(
                m_prev=torch.zeros_like(self.r_t.m_prev),
                f_dewarped=torch.zeros_like(self.r_t.f_dewarped),
                valid=False,
            ))
        return bundle

    def select(self, index) -> "ConditionBundle":
        """Batch slice, used for per-sample sampling."""
        return ConditionBundle(
            f_d=self.f_d[index], f_m=self.f_m[index], f_l=self.f_l[index],
            r_t=TimeVariantCondition(self.r_t.m_prev[index], self.r_t.f_dewarped[index],
                                     self.r_t.valid),
        )


@dataclass
class TrainingBatch:
    """Stacked network inputs and latent ground truth of one batch."""
    images: torch.Tensor
    fg_masks: torch.Tensor
    textline_masks: torch.Tensor
    m0: LatentGrid

    @property
    def size(self) -> int:
        return int(self.m0.shape[0])


@dataclass
class TrainStepResult:
    loss: float
    t: int
    grad_norm: float
    rollout_calls: int
