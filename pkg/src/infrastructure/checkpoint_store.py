"""
Checkpoint Store
Versioned torch.save container: config snapshot, parameters, optimizer
state, RNG states and the update counter.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from ..domain.models.errors import CheckpointError
from ..domain.models.run_config import RunConfig
from .run_config_service import config_hash, parse_run_config

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "dvd-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class CheckpointPayload:
    config: RunConfig
    config_hash: str
    model_state: Dict[str, torch.Tensor]
    optimizer_state: Optional[Dict[str, Any]]
    torch_rng_state: Optional[torch.Tensor]
    numpy_rng_state: Optional[Dict[str, Any]]
    update: int


def save_checkpoint(path: Union[str, Path], config: RunConfig, model: torch.nn.Module,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    torch_rng: Optional[torch.Generator] = None,
                    numpy_rng: Optional[np.random.Generator] = None,
                    update: int = 0) -> Path:
    """Write the checkpoint atomically (temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    container = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.model_dump_json(),
        "config_hash": config_hash(config),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng": torch_rng.get_state() if torch_rng is not None else None,
        "numpy_rng": numpy_rng.bit_generator.state if numpy_rng is not None else None,
        "update": int(update),
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(container, tmp)
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint at update {update} to {path}")
    return path


def load_checkpoint(path: Union[str, Path], map_location: str = "cpu") -> CheckpointPayload:
    """
    Read and validate a checkpoint.

    Raises:
        CheckpointError: missing/corrupt file, unknown format or version
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", None, CHECKPOINT_VERSION)
    try:
        container = torch.load(path, map_location=map_location, weights_only=False)
    except Exception as e:
        logger.error(f"Cannot read checkpoint {path}: {str(e)}")
        raise CheckpointError(f"corrupt checkpoint {path}: {e}", None, CHECKPOINT_VERSION)

    if not isinstance(container, dict) or container.get("format") != CHECKPOINT_FORMAT:
        found = container.get("format") if isinstance(container, dict) else type(container).__name__
        raise CheckpointError(f"{path} is not a dvd checkpoint (format {found!r})",
                              None, CHECKPOINT_VERSION)
    version = container.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version in {path}", version, CHECKPOINT_VERSION)

    try:
        config = parse_run_config(json.loads(container["config"]))
        return CheckpointPayload(
            config=config,
            config_hash=container["config_hash"],
            model_state=container["model"],
            optimizer_state=container.get("optimizer"),
            torch_rng_state=container.get("torch_rng"),
            numpy_rng_state=container.get("numpy_rng"),
            update=int(container["update"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"incomplete checkpoint {path}: {e}", version, CHECKPOINT_VERSION)


def restore_rngs(payload: CheckpointPayload, torch_rng: torch.Generator,
                 numpy_rng: np.random.Generator) -> None:
    if payload.torch_rng_state is not None:
        torch_rng.set_state(payload.torch_rng_state)
    if payload.numpy_rng_state is not None:
        numpy_rng.bit_generator.state = payload.numpy_rng_state
