"""
TVCR Trainer
Drives tvcr_train_step over a synthetic corpus: batch sampling, JSONL loss
log, periodic checkpoints and resumption.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import torch
from tqdm import tqdm

from ..domain.models.errors import CheckpointError, InvalidArgumentError, TrainingError
from ..domain.models.run_config import RunConfig
from ..domain.models.sample_models import SampleRecord
from ..infrastructure.checkpoint_store import load_checkpoint, restore_rngs, save_checkpoint
from ..infrastructure.dataset_store import read_dataset
from ..infrastructure.diffusion_service import make_schedule, tvcr_train_step
from ..infrastructure.net.dvd_network import DvdNetwork
from ..infrastructure.run_config_service import config_hash
from ..infrastructure.training_batches import select, stack_records

logger = logging.getLogger(__name__)


@dataclass
class TrainingSummary:
    updates: int
    first_loss: Optional[float]
    last_loss: Optional[float]
    checkpoint: Path
    log_path: Path


def log_path_for(ckpt_out: Union[str, Path]) -> Path:
    ckpt_out = Path(ckpt_out)
    return ckpt_out.with_name(ckpt_out.stem + ".train.jsonl")


def build_model(config: RunConfig) -> DvdNetwork:
    """Network with parameters initialised from the run seed."""
    torch.manual_seed(config.seed)
    return DvdNetwork(config.net)


def build_optimizer(config: RunConfig, model: torch.nn.Module) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=config.training.lr)


class TvcrTrainer:
    """Trains one DvdNetwork on one corpus."""

    def __init__(self, config: RunConfig, records: Sequence[SampleRecord], device: str = "cpu"):
        if not records:
            raise InvalidArgumentError("training corpus is empty")
        self.config = config
        self.config_hash = config_hash(config)
        self.device = torch.device(device)
        self.data = stack_records(records, config.latent_size)
        self.schedule = make_schedule(config.schedule.T, config.schedule.beta_start,
                                      config.schedule.beta_end, config.schedule.eta)
        self.model = build_model(config).to(self.device)
        self.optimizer = build_optimizer(config, self.model)
        self.torch_rng = torch.Generator().manual_seed(config.seed)
        self.numpy_rng = np.random.default_rng(config.seed)
        self.update = 0
        logger.info(f"TvcrTrainer initialized: {len(records)} records, config {self.config_hash}")

    @classmethod
    def from_dataset(cls, config: RunConfig, data_dir: Union[str, Path],
                     device: str = "cpu") -> "TvcrTrainer":
        return cls(config, read_dataset(data_dir), device)

    def resume(self, ckpt_path: Union[str, Path]) -> None:
        """Restore parameters, optimizer, RNG states and the update counter."""
        payload = load_checkpoint(ckpt_path, map_location=str(self.device))
        if payload.config.net != self.config.net:
            raise CheckpointError(
                f"checkpoint network config differs from the run config ({payload.config_hash} "
                f"vs {self.config_hash})", payload.config_hash, self.config_hash,
            )
        self.model.load_state_dict(payload.model_state)
        if payload.optimizer_state is not None:
            self.optimizer.load_state_dict(payload.optimizer_state)
        restore_rngs(payload, self.torch_rng, self.numpy_rng)
        self.update = payload.update
        logger.info(f"Resumed from {ckpt_path} at update {self.update}")

    def _next_indices(self) -> np.ndarray:
        count = self.data.size
        batch_size = self.config.training.batch_size
        return self.numpy_rng.choice(count, size=batch_size, replace=count < batch_size)

    def save(self, ckpt_out: Union[str, Path]) -> Path:
        return save_checkpoint(ckpt_out, self.config, self.model, self.optimizer,
                               self.torch_rng, self.numpy_rng, self.update)

    def train(self, total_updates: int, ckpt_out: Union[str, Path],
              log_path: Optional[Union[str, Path]] = None, progress: bool = True) -> TrainingSummary:
        """
        Run updates until the counter reaches `total_updates`.

        Raises:
            TrainingError: non-finite loss; the JSONL log keeps the failing row
        """
        training = self.config.training
        log_path = Path(log_path) if log_path else log_path_for(ckpt_out)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        mode = "a" if self.update > 0 and log_path.exists() else "w"
        losses: List[float] = []

        with open(log_path, mode, encoding="utf-8") as log_file:
            bar = tqdm(total=max(0, total_updates - self.update), disable=not progress, desc="train")
            while self.update < total_updates:
                batch = select(self.data, self._next_indices(), self.device)
                try:
                    result = tvcr_train_step(
                        batch, self.model, self.schedule, training.rollout_steps,
                        self.optimizer, self.torch_rng, grad_clip=training.grad_clip,
                        disabled_streams=training.zeroed_streams(), clamp=training.rollout_clamp,
                    )
                except TrainingError as e:
                    row = {"update": self.update + 1, "error": str(e), **e.diagnostics,
                           "config_hash": self.config_hash}
                    log_file.write(json.dumps(row, sort_keys=True) + "\n")
                    raise
                self.update += 1
                losses.append(result.loss)
                bar.update(1)
                if self.update % training.log_every == 0 or self.update == total_updates:
                    row = {"update": self.update, "loss": result.loss, "t": result.t,
                           "grad_norm": result.grad_norm, "config_hash": self.config_hash}
                    log_file.write(json.dumps(row, sort_keys=True) + "\n")
                    log_file.flush()
                if self.update % training.ckpt_every == 0 and self.update < total_updates:
                    self.save(ckpt_out)
            bar.close()

        checkpoint = self.save(ckpt_out)
        logger.info(f"Training finished at update {self.update}")
        return TrainingSummary(
            updates=self.update,
            first_loss=losses[0] if losses else None,
            last_loss=losses[-1] if losses else None,
            checkpoint=checkpoint,
            log_path=log_path,
        )
