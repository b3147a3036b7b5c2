"""
Diffusion Service
Coordinate-space diffusion: noise schedule, forward noising, the x0-predicting
DDIM reverse step, sampling with time-variant condition refinement, the
regression loss and one TVCR training update.

Timesteps are plain ints shared by the whole batch. Denoisers are callables
denoiser(m_t, t_batch, condition) -> x0_hat on (batch, 2, h, w) tensors.
"""

import logging
import math
from typing import Callable, Iterable, List, Optional

import numpy as np
import torch
import torch.nn.functional as F

from ..domain.models.diffusion_models import (
    ConditionBundle, LatentGrid, NoiseSchedule, TimeVariantCondition,
    TrainingBatch, TrainStepResult,
)
from ..domain.models.errors import InvalidArgumentError, ScheduleError, TrainingError
from .mapping_service import warp_features

logger = logging.getLogger(__name__)

Denoiser = Callable[[LatentGrid, torch.Tensor, ConditionBundle], LatentGrid]

DEFAULT_CLAMP = 1.5
# roundoff allowance on 1 - abar_prev - sigma^2
_COEF_EPS = 1e-12


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02,
                  eta: float = 0.0) -> NoiseSchedule:
    """
    Linear beta schedule with tables indexed 0..T (alpha_bar[0] = 1).

    Raises:
        InvalidArgumentError: T < 1, betas outside (0, 1) or decreasing, eta < 0
    """
    if T < 1:
        raise InvalidArgumentError(f"T must be at least 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidArgumentError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    if eta < 0.0:
        raise InvalidArgumentError(f"eta must be non-negative, got {eta}")

    betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    beta = torch.cat([torch.zeros(1, dtype=torch.float64), betas])
    alpha_bar = torch.cumprod(1.0 - beta, dim=0)

    sigma = torch.zeros(T + 1, dtype=torch.float64)
    if eta > 0.0:
        ab_t, ab_prev = alpha_bar[1:], alpha_bar[:-1]
        sigma[1:] = eta * torch.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * torch.sqrt(1.0 - ab_t / ab_prev)

    schedule = NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar, sigma=sigma, eta=float(eta))
    logger.debug(f"Schedule T={T} beta=[{beta_start}, {beta_end}] eta={eta} "
                 f"alpha_bar_T={schedule.ab(T):.3e}")
    return schedule


def _check_t(t: int, sched: NoiseSchedule, lowest: int) -> int:
    t = int(t)
    if not lowest <= t <= sched.T:
        raise InvalidArgumentError(f"timestep {t} outside [{lowest}, {sched.T}]")
    return t


def forward_diffuse(m0: LatentGrid, t: int, z: LatentGrid, sched: NoiseSchedule) -> LatentGrid:
    """m_t = sqrt(abar_t) m0 + sqrt(1 - abar_t) z; t = 0 returns m0."""
    t = _check_t(t, sched, 0)
    if m0.shape != z.shape:
        raise InvalidArgumentError(f"noise shape {tuple(z.shape)} != mapping shape {tuple(m0.shape)}")
    ab = sched.ab(t)
    return math.sqrt(ab) * m0 + math.sqrt(1.0 - ab) * z


def ddim_step(m_t: LatentGrid, x0_hat: LatentGrid, t: int, sched: NoiseSchedule,
              z: Optional[LatentGrid] = None, t_prev: Optional[int] = None) -> LatentGrid:
    """
    One reverse step from t to t_prev (default t - 1):

        m_prev = sqrt(abar_prev) x0_hat
                 + sqrt(1 - abar_prev - sigma^2) / sqrt(1 - abar_t) * (m_t - sqrt(abar_t) x0_hat)
                 + sigma z

    Raises:
        ScheduleError: 1 - abar_prev - sigma^2 is negative
    """
    t = _check_t(t, sched, 1)
    t_prev = t - 1 if t_prev is None else int(t_prev)
    if not 0 <= t_prev < t:
        raise InvalidArgumentError(f"t_prev {t_prev} must lie in [0, {t})")

    ab_t, ab_prev = sched.ab(t), sched.ab(t_prev)
    sigma = sched.sigma_between(t, t_prev)
    coef_sq = 1.0 - ab_prev - sigma ** 2
    if coef_sq < -_COEF_EPS:
        raise ScheduleError(
            f"negative direction coefficient {coef_sq:.3e} at t={t}, t_prev={t_prev} "
            f"(eta={sched.eta})"
        )
    direction = math.sqrt(max(coef_sq, 0.0)) / math.sqrt(1.0 - ab_t)
    out = math.sqrt(ab_prev) * x0_hat + direction * (m_t - math.sqrt(ab_t) * x0_hat)
    if sigma > 0.0:
        if z is None:
            raise InvalidArgumentError("noise z is required when sigma > 0")
        out = out + sigma * z
    return out


def timestep_sequence(T: int, steps: int) -> List[int]:
    """Uniformly spaced timesteps from T down to 1, at most `steps` of them."""
    if steps < 1:
        raise InvalidArgumentError(f"steps must be at least 1, got {steps}")
    if steps == 1:
        return [T]
    values = np.rint(np.linspace(T, 1, min(steps, T))).astype(int).tolist()
    return list(dict.fromkeys(values))


def rollout_sequence(T: int, t: int, rollout_steps: int) -> List[int]:
    """Uniformly spaced timesteps from T down to t inclusive, at most rollout_steps + 1."""
    values = np.rint(np.linspace(T, t, rollout_steps + 1)).astype(int).tolist()
    return list(dict.fromkeys(values))


def refinement_condition(f_d: torch.Tensor, x0_hat: LatentGrid,
                         clamp: float = DEFAULT_CLAMP) -> TimeVariantCondition:
    """r_t from an x0 prediction: the clamped mapping and f_d dewarped with it."""
    m_prev = x0_hat.clamp(-clamp, clamp)
    return TimeVariantCondition(m_prev=m_prev, f_dewarped=warp_features(f_d, m_prev), valid=True)


def _timesteps(t: int, batch: int, device) -> torch.Tensor:
    return torch.full((batch,), int(t), dtype=torch.long, device=device)


def _empty_refinement(f_d: torch.Tensor) -> TimeVariantCondition:
    batch, feat_dim, height, _ = f_d.shape
    return TimeVariantCondition.empty(batch, height, feat_dim, f_d.device, f_d.dtype)


@torch.no_grad()
def sample(denoiser: Denoiser, conditions: ConditionBundle, sched: NoiseSchedule,
           steps: int, rng: torch.Generator, disabled_streams: Iterable[str] = (),
           clamp: float = DEFAULT_CLAMP) -> LatentGrid:
    """
    Reverse process from standard-normal m_T over `steps` uniformly spaced timesteps.

    The first step sees an all-zero r_t; every later step sees the previous
    x0 prediction and f_d dewarped with it. Returns the final x0 prediction.
    """
    f_d = conditions.f_d
    batch, _, height, width = f_d.shape
    m = torch.randn((batch, 2, height, width), generator=rng, dtype=f_d.dtype).to(f_d.device)
    r_t = _empty_refinement(f_d)
    disabled = list(disabled_streams)
    sequence = timestep_sequence(sched.T, steps)

    x0_hat = m
    for index, t in enumerate(sequence):
        cond = conditions.with_refinement(r_t).ablate(disabled)
        x0_hat = denoiser(m, _timesteps(t, batch, f_d.device), cond)
        if index == len(sequence) - 1:
            break
        t_prev = sequence[index + 1]
        z = None
        if sched.sigma_between(t, t_prev) > 0.0:
            z = torch.randn(m.shape, generator=rng, dtype=m.dtype).to(m.device)
        m = ddim_step(m, x0_hat, t, sched, z, t_prev)
        r_t = refinement_condition(f_d, x0_hat, clamp)
    return x0_hat


def fork_generator(rng: torch.Generator) -> torch.Generator:
    """Independent generator seeded from a draw of `rng`."""
    seed = int(torch.randint(0, 2**62, (1,), generator=rng))
    return torch.Generator().manual_seed(seed)


@torch.no_grad()
def dual_hypothesis_sample(denoiser: Denoiser, conditions: ConditionBundle,
                           sched: NoiseSchedule, steps: int, rng: torch.Generator,
                           second_rng: Optional[torch.Generator] = None,
                           disabled_streams: Iterable[str] = (),
                           clamp: float = DEFAULT_CLAMP) -> LatentGrid:
    """Mean of two sampling runs with independent noise."""
    second_rng = second_rng if second_rng is not None else fork_generator(rng)
    first = sample(denoiser, conditions, sched, steps, rng, disabled_streams, clamp)
    second = sample(denoiser, conditions, sched, steps, second_rng, disabled_streams, clamp)
    return (first + second) / 2.0


def diffusion_loss(m0: LatentGrid, x0_hat: LatentGrid) -> torch.Tensor:
    """Mean squared error over all elements."""
    if m0.shape != x0_hat.shape:
        raise InvalidArgumentError(
            f"prediction shape {tuple(x0_hat.shape)} != target shape {tuple(m0.shape)}"
        )
    return F.mse_loss(x0_hat, m0)


def tvcr_train_step(batch: TrainingBatch, model, sched: NoiseSchedule, rollout_steps: int,
                    optimizer: torch.optim.Optimizer, rng: torch.Generator,
                    grad_clip: float = 1.0, disabled_streams: Iterable[str] = (),
                    clamp: float = DEFAULT_CLAMP) -> TrainStepResult:
    """
    One TVCR update.

    Draws t uniformly from 1..T. At t = T the refinement condition is zero;
    otherwise a gradient-free rollout from T down to t (at most
    `rollout_steps` denoiser calls) yields m_0|t, and f_0|t is recomputed
    from the gradient-carrying f_d with the detached m_0|t.

    Args:
        batch: stacked images, masks and latent ground truth
        model: network exposing extract_features(...) and __call__(m_t, t, cond)
        sched: noise schedule
        rollout_steps: cap on rollout denoiser calls
        optimizer: optimizer over model parameters
        rng: generator for t, rollout noise and forward noise

    Returns:
        TrainStepResult with the loss value before the update

    Raises:
        InvalidArgumentError: rollout_steps < 1
        TrainingError: loss or gradient norm is not finite
    """
    if rollout_steps < 1:
        raise InvalidArgumentError(f"rollout_steps must be at least 1, got {rollout_steps}")
    disabled = set(disabled_streams)
    model.train()
    device = batch.m0.device
    size = batch.size

    t = int(torch.randint(1, sched.T + 1, (1,), generator=rng))
    f_d, f_m, f_l = model.extract_features(batch.images, batch.fg_masks, batch.textline_masks)
    conditions = ConditionBundle(f_d, f_m, f_l, _empty_refinement(f_d))

    rollout_calls = 0
    r_t = conditions.r_t
    if t < sched.T and "refinement" not in disabled:
        with torch.no_grad():
            detached = ConditionBundle(f_d.detach(), f_m.detach(), f_l.detach(), conditions.r_t)
            sequence = rollout_sequence(sched.T, t, rollout_steps)
            m = torch.randn(batch.m0.shape, generator=rng, dtype=batch.m0.dtype).to(device)
            rollout_r = detached.r_t
            x0_hat = None
            for index, tau in enumerate(sequence[:-1]):
                cond = detached.with_refinement(rollout_r).ablate(disabled)
                x0_hat = model(m, _timesteps(tau, size, device), cond)
                rollout_calls += 1
                t_next = sequence[index + 1]
                z = None
                if sched.sigma_between(tau, t_next) > 0.0:
                    z = torch.randn(m.shape, generator=rng, dtype=m.dtype).to(device)
                m = ddim_step(m, x0_hat, tau, sched, z, t_next)
                rollout_r = refinement_condition(detached.f_d, x0_hat, clamp)
            m_prev = x0_hat.clamp(-clamp, clamp).detach()
        r_t = TimeVariantCondition(m_prev=m_prev, f_dewarped=warp_features(f_d, m_prev), valid=True)

    z = torch.randn(batch.m0.shape, generator=rng, dtype=batch.m0.dtype).to(device)
    m_t = forward_diffuse(batch.m0, t, z, sched)
    cond = conditions.with_refinement(r_t).ablate(disabled)
    x0_hat = model(m_t, _timesteps(t, size, device), cond)
    loss = diffusion_loss(batch.m0, x0_hat)

    loss_value = float(loss.detach())
    if not math.isfinite(loss_value):
        logger.error(f"Non-finite loss {loss_value} at t={t}")
        raise TrainingError("non-finite training loss", {
            "loss": loss_value, "t": t, "rollout_calls": rollout_calls,
            "pred_abs_max": float(x0_hat.detach().abs().max()),
        })

    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    grad_norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip))
    if not math.isfinite(grad_norm):
        logger.error(f"Non-finite gradient norm at t={t}")
        raise TrainingError("non-finite gradient norm", {"loss": loss_value, "t": t,
                                                         "grad_norm": grad_norm})
    optimizer.step()
    return TrainStepResult(loss=loss_value, t=t, grad_norm=grad_norm, rollout_calls=rollout_calls)
