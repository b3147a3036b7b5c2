import logging

import click

from ..use_cases.dewarp_pipeline import DewarpPipeline
from .cli_support import console, summary_table

logger = logging.getLogger(__name__)


@click.command("dewarp")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False), help="Trained checkpoint.")
@click.option("--input", "source", required=True, type=click.Path(),
              help="Image, directory of images, or synthetic dataset.")
@click.option("--output", required=True, type=click.Path(file_okay=False))
@click.option("--steps", type=int, default=None, help="Sampling steps (default from the checkpoint config).")
@click.option("--dual/--single", default=None, help="Average two sampled mappings.")
@click.option("--seed", type=int, default=None, help="Run seed (default from the checkpoint config).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--no-progress", is_flag=True)
def dewarp(ckpt, source, output, steps, dual, seed, device, no_progress):
    """Dewarp photos with a trained checkpoint."""
    pipeline = DewarpPipeline.from_checkpoint(ckpt, steps=steps, dual=dual,
                                              device=device, seed=seed)
    results = pipeline.run(source, output, progress=not no_progress)
    mean, total = pipeline.timings(results)
    console.print(summary_table("dewarp", [
        ("images", len(results)),
        ("steps", pipeline.steps),
        ("dual hypothesis", pipeline.dual),
        ("mean seconds", f"{mean:.4f}"),
        ("total seconds", f"{total:.4f}"),
        ("output", output),
    ]))
