"""
Dewarp Pipeline
Loads a trained checkpoint, samples a backward mapping per input image and
writes the dewarped image, the predicted mapping and per-image timing.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from ..domain.models.diffusion_models import ConditionBundle, TimeVariantCondition
from ..domain.models.errors import InvalidArgumentError
from ..domain.models.mapping_models import DocumentImage, GridMapping
from ..domain.models.run_config import RunConfig
from ..infrastructure.checkpoint_store import CheckpointPayload, load_checkpoint
from ..infrastructure.dataset_store import INDEX_FILE, DatasetStore, load_image, save_image
from ..infrastructure.diffusion_service import dual_hypothesis_sample, make_schedule, sample
from ..infrastructure.mapping_codec import write_mapping
from ..infrastructure.mapping_service import apply_backward_mapping, upsample_mapping
from ..infrastructure.net.dvd_network import DvdNetwork, extract_features
from ..infrastructure.net.feature_extractors import heuristic_masks

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class DewarpInput:
    id: str
    image: DocumentImage
    fg_mask: np.ndarray
    textline_mask: np.ndarray
    oracle_masks: bool


@dataclass
class DewarpResult:
    id: str
    dewarped: DocumentImage
    mapping: GridMapping
    seconds: float


def per_image_seed(seed: int, image_id: str) -> int:
    """Seed derived from (run seed, id); independent of processing order."""
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def iter_inputs(source: Union[str, Path]) -> Iterator[DewarpInput]:
    """
    A synthetic dataset directory (oracle masks), a single image, or a
    directory of images (heuristic masks).
    """
    source = Path(source)
    if source.is_dir() and (source / INDEX_FILE).is_file():
        store = DatasetStore(source)
        for record_id in store.ids():
            record = store.read_record(record_id)
            yield DewarpInput(record.id, record.warped, record.fg_mask, record.textline_mask, True)
        return
    if source.is_file():
        paths = [source]
    elif source.is_dir():
        paths = sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    else:
        raise InvalidArgumentError(f"input not found: {source}")
    if not paths:
        raise InvalidArgumentError(f"no images found in {source}")
    for path in paths:
        image = load_image(path)
        fg, text = heuristic_masks(image)
        yield DewarpInput(path.stem, image, fg, text, False)


class DewarpPipeline:
    """Inference with one trained network."""

    def __init__(self, payload: CheckpointPayload, steps: Optional[int] = None,
                 dual: Optional[bool] = None, device: str = "cpu",
                 seed: Optional[int] = None):
        self.config: RunConfig = payload.config
        self.config_hash = payload.config_hash
        self.device = torch.device(device)
        self.steps = steps if steps is not None else self.config.sampling.steps
        if self.steps < 1:
            raise InvalidArgumentError(f"steps must be at least 1, got {self.steps}")
        self.dual = dual if dual is not None else self.config.sampling.dual_hypothesis
        self.seed = seed if seed is not None else self.config.seed
        schedule = self.config.schedule
        eta = self.config.sampling.eta if self.config.sampling.eta is not None else schedule.eta
        self.schedule = make_schedule(schedule.T, schedule.beta_start, schedule.beta_end, eta)
        self.disabled_streams = self.config.training.zeroed_streams()
        self.model = DvdNetwork(self.config.net).to(self.device)
        self.model.load_state_dict(payload.model_state)
        self.model.eval()
        logger.info(f"DewarpPipeline initialized: steps={self.steps}, dual={self.dual}, "
                    f"config {self.config_hash}")

    @classmethod
    def from_checkpoint(cls, ckpt: Union[str, Path], **kwargs) -> "DewarpPipeline":
        return cls(load_checkpoint(ckpt), **kwargs)

    @torch.no_grad()
    def predict_latent(self, item: DewarpInput, seed: int) -> torch.Tensor:
        """(1, 2, latent, latent) predicted mapping."""
        f_d, f_m, f_l = extract_features(self.model, item.image, item.fg_mask, item.textline_mask)
        size = self.config.latent_size
        r_t = TimeVariantCondition.empty(1, size, self.config.net.feat_dim, f_d.device, f_d.dtype)
        conditions = ConditionBundle(f_d, f_m, f_l, r_t)
        rng = torch.Generator().manual_seed(seed)
        clamp = self.config.training.rollout_clamp
        if self.dual:
            return dual_hypothesis_sample(self.model, conditions, self.schedule, self.steps, rng,
                                          disabled_streams=self.disabled_streams, clamp=clamp)
        return sample(self.model, conditions, self.schedule, self.steps, rng,
                      disabled_streams=self.disabled_streams, clamp=clamp)

    def dewarp(self, item: DewarpInput) -> DewarpResult:
        started = time.perf_counter()
        latent = self.predict_latent(item, per_image_seed(self.seed, item.id))
        latent_map = GridMapping.from_channels_first(latent[0].cpu().numpy().astype(np.float64))
        full = upsample_mapping(latent_map, item.image.height, item.image.width)
        dewarped = apply_backward_mapping(item.image, full, fill=0.0)
        seconds = time.perf_counter() - started
        return DewarpResult(item.id, dewarped, full.astype(np.float32), seconds)

    def run(self, source: Union[str, Path], output: Union[str, Path],
            progress: bool = True) -> List[DewarpResult]:
        """Dewarp every input and write `<id>.png`, `<id>.dvdm`, `<id>.json` plus an index."""
        output = Path(output)
        output.mkdir(parents=True, exist_ok=True)
        results = []
        for item in tqdm(list(iter_inputs(source)), disable=not progress, desc="dewarp"):
            result = self.dewarp(item)
            save_image(result.dewarped, output / f"{item.id}.png")
            write_mapping(result.mapping, output / f"{item.id}.dvdm")
            meta = {
                "id": item.id,
                "steps": self.steps,
                "dual_hypothesis": self.dual,
                "seed": self.seed,
                "seconds": round(result.seconds, 6),
                "oracle_masks": item.oracle_masks,
                "config_hash": self.config_hash,
            }
            (output / f"{item.id}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                    encoding="utf-8")
            results.append(result)
        index = {"config_hash": self.config_hash, "ids": sorted(r.id for r in results),
                 "steps": self.steps, "dual_hypothesis": self.dual}
        (output / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
        logger.info(f"Dewarped {len(results)} images into {output}")
        return results

    def timings(self, results: List[DewarpResult]) -> Tuple[float, float]:
        """(mean, total) seconds."""
        seconds = [r.seconds for r in results]
        return (float(np.mean(seconds)) if seconds else 0.0, float(np.sum(seconds)))
