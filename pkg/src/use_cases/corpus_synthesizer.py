"""
Corpus Synthesizer
Generates a synthetic corpus and writes it to an output directory owned by
this run.
"""

import logging
import shutil
from pathlib import Path
from typing import List, Union

from ..domain.models.errors import InvalidArgumentError
from ..domain.models.run_config import RunConfig
from ..domain.models.sample_models import Layout, SampleRecord
from ..infrastructure.corpus_generator import generate_corpus
from ..infrastructure.dataset_store import write_dataset
from ..infrastructure.run_config_service import config_hash

logger = logging.getLogger(__name__)


def prepare_output_dir(out: Path, force: bool) -> None:
    """Refuse to write into an existing non-empty directory unless forced."""
    if out.exists() and not out.is_dir():
        raise InvalidArgumentError(f"output path is not a directory: {out}")
    if out.is_dir() and any(out.iterdir()):
        if not force:
            raise InvalidArgumentError(f"output directory {out} is not empty (use --force)")
        logger.warning(f"Clearing existing output directory {out}")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


class CorpusSynthesizer:
    """Builds and persists one synthetic corpus from a resolved RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config_hash(config)
        logger.info(f"CorpusSynthesizer initialized (config {self.config_hash})")

    def synthesize(self, out: Union[str, Path], force: bool = False,
                   progress: bool = True) -> List[SampleRecord]:
        synth = self.config.synth
        out = Path(out)
        prepare_output_dir(out, force)
        records = generate_corpus(
            count=synth.count,
            size=synth.size,
            latent_size=self.config.latent_size,
            layouts=[Layout(layout) for layout in synth.layouts],
            seed=self.config.seed,
            workers=synth.workers,
            progress=progress,
        )
        write_dataset(
            records, out,
            latent_size=self.config.latent_size,
            seed=self.config.seed,
            extra={
                "config_hash": self.config_hash,
                "size": synth.size,
                "layouts": list(synth.layouts),
            },
        )
        logger.info(f"Wrote {len(records)} records to {out}")
        return records
