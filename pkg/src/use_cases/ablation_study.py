"""
Ablation Study
Trains with and without time-variant condition refinement over several seeds
and sweeps the number of sampling steps, scoring AD, MS-SSIM and wall-clock
time on a held-out split against the unrectified input.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from ..domain.models.errors import InvalidArgumentError, MetricUnavailableError
from ..domain.models.mapping_models import DocumentImage
from ..domain.models.run_config import RunConfig
from ..domain.models.sample_models import SampleRecord
from ..infrastructure.checkpoint_store import load_checkpoint
from ..infrastructure.dataset_store import read_dataset
from ..infrastructure.metrics.flow_distortion import FlowSettings, distortion_metrics
from ..infrastructure.metrics.image_similarity import ms_ssim
from ..infrastructure.pair_generator import relight
from ..infrastructure.run_config_service import config_hash
from .dewarp_pipeline import DewarpInput, DewarpPipeline
from .tvcr_trainer import TvcrTrainer

logger = logging.getLogger(__name__)

STEP_SWEEP = (1, 3, 50)
ABLATION_FILE = "ablation.json"


@dataclass
class AblationRun:
    seed: int
    variant: str
    steps: int
    ad: Optional[float]
    ms_ssim: Optional[float]
    seconds: float


def split_holdout(records: Sequence[SampleRecord], fraction: float = 0.125) -> Tuple[list, list]:
    """(train, test) by sorted id; the last `fraction` of ids is held out."""
    if len(records) < 2:
        raise InvalidArgumentError("ablation needs at least 2 records to hold some out")
    ordered = sorted(records, key=lambda r: r.id)
    n_test = max(1, int(round(len(ordered) * fraction)))
    return ordered[:-n_test], ordered[-n_test:]


def _variant_config(config: RunConfig, seed: int, tvcr: bool) -> RunConfig:
    training = config.training.model_copy(update={"tvcr": tvcr})
    return config.model_copy(update={"seed": seed, "training": training})


def _mean(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def _std(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if len(present) < 2:
        return 0.0 if present else None
    mean = math.fsum(present) / len(present)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in present) / (len(present) - 1))


class AblationStudy:
    """TVCR on/off and sampling-step ablations at toy scale."""

    def __init__(self, config: RunConfig, records: Sequence[SampleRecord], device: str = "cpu",
                 steps_sweep: Sequence[int] = STEP_SWEEP):
        self.config = config
        self.device = device
        self.train_records, self.test_records = split_holdout(records)
        self.steps_sweep = tuple(steps_sweep)
        self.flow = FlowSettings.from_eval_config(config.eval)
        logger.info(f"AblationStudy initialized: {len(self.train_records)} train, "
                    f"{len(self.test_records)} held-out records")

    @classmethod
    def from_dataset(cls, config: RunConfig, data_dir: Union[str, Path], **kwargs) -> "AblationStudy":
        return cls(config, read_dataset(data_dir), **kwargs)

    def _train(self, config: RunConfig, updates: int, ckpt: Path) -> Path:
        trainer = TvcrTrainer(config, self.train_records, self.device)
        return trainer.train(updates, ckpt, progress=False).checkpoint

    def _measure(self, record: SampleRecord, image: DocumentImage,
                 ads: List[float], scores: List[float]) -> None:
        gt = relight(record.flat, record.domains.lighting)
        scores.append(ms_ssim(image, gt))
        try:
            ads.append(distortion_metrics(image, gt, self.flow)[1])
        except MetricUnavailableError as e:
            logger.warning(f"AD unavailable for {record.id}: {str(e)}")

    def _baseline(self) -> Dict[str, Optional[float]]:
        """The warped input scored as is, i.e. dewarped with the identity mapping."""
        ads, scores = [], []
        for record in self.test_records:
            self._measure(record, record.warped, ads, scores)
        return {"ad": _mean(ads), "ms_ssim": _mean(scores)}

    def _score(self, ckpt: Path, steps: int) -> Tuple[Optional[float], Optional[float], float]:
        pipeline = DewarpPipeline(load_checkpoint(ckpt, map_location=self.device), steps=steps,
                                  device=self.device)
        ads, scores, seconds = [], [], []
        for record in self.test_records:
            item = DewarpInput(record.id, record.warped, record.fg_mask, record.textline_mask, True)
            result = pipeline.dewarp(item)
            seconds.append(result.seconds)
            self._measure(record, result.dewarped, ads, scores)
        return _mean(ads), _mean(scores), math.fsum(seconds) / len(seconds)

    def run(self, out: Union[str, Path], seeds: Sequence[int], updates: int,
            progress: bool = True) -> Dict[str, object]:
        """Train both variants per seed, score them and write `ablation.json`."""
        if not seeds:
            raise InvalidArgumentError("at least one seed is required")
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        runs: List[AblationRun] = []
        default_steps = self.config.sampling.steps
        for seed in tqdm(list(seeds), disable=not progress, desc="ablate"):
            seed_dir = out / f"seed_{seed}"
            for variant, tvcr in (("tvcr_on", True), ("tvcr_off", False)):
                ckpt = self._train(_variant_config(self.config, seed, tvcr), updates, seed_dir / f"{variant}.pt")
                sweep = sorted(set(self.steps_sweep) | {default_steps}) if tvcr else [default_steps]
                for steps in sweep:
                    ad, score, seconds = self._score(ckpt, steps)
                    runs.append(AblationRun(seed, variant, steps, ad, score, seconds))
                    logger.info(f"seed {seed} {variant} steps={steps}: ad={ad} ms_ssim={score} "
                                f"time={seconds:.4f}s")

        summary = {}
        for key in sorted({(r.variant, r.steps) for r in runs}):
            group = [r for r in runs if (r.variant, r.steps) == key]
            summary[f"{key[0]}@{key[1]}"] = {
                "ad_mean": _mean([r.ad for r in group]),
                "ad_std": _std([r.ad for r in group]),
                "ms_ssim_mean": _mean([r.ms_ssim for r in group]),
                "ms_ssim_std": _std([r.ms_ssim for r in group]),
                "seconds_mean": _mean([r.seconds for r in group]),
            }

        by_key = {(r.seed, r.variant, r.steps): r for r in runs}
        wins = 0
        for seed in seeds:
            on = by_key[(seed, "tvcr_on", default_steps)]
            off = by_key[(seed, "tvcr_off", default_steps)]
            if on.ad is not None and off.ad is not None and on.ad < off.ad:
                wins += 1

        result = {
            "config_hash": config_hash(self.config),
            "seeds": list(seeds),
            "updates": updates,
            "test_ids": [r.id for r in self.test_records],
            "baseline": self._baseline(),
            "runs": [asdict(r) for r in runs],
            "summary": summary,
            "tvcr_wins": wins,
        }
        (out / ABLATION_FILE).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Ablation written to {out / ABLATION_FILE}")
        return result
