import logging

import click

from ..use_cases.tvcr_trainer import TvcrTrainer
from .cli_support import console, echo_config, resolve_config, summary_table

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--data", required=True, type=click.Path(), help="Synthetic training corpus.")
@click.option("--ckpt-out", required=True, type=click.Path(dir_okay=False), help="Checkpoint to write.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--updates", type=int, default=None, help="Total number of parameter updates.")
@click.option("--resume", "resume_from", type=click.Path(dir_okay=False), default=None,
              help="Continue from this checkpoint.")
@click.option("--seed", type=int, default=None)
@click.option("--log-path", type=click.Path(dir_okay=False), default=None,
              help="JSONL training log (default: <ckpt-out stem>.train.jsonl).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--no-progress", is_flag=True)
def train(data, ckpt_out, config_path, updates, resume_from, seed, log_path, device, no_progress):
    """Train the denoiser with time-variant condition refinement."""
    config, _ = resolve_config(config_path, {
        "seed": seed,
        "train_data": data,
        "training": {"updates": updates},
    })
    echo_config(config)
    trainer = TvcrTrainer.from_dataset(config, data, device=device)
    if resume_from:
        trainer.resume(resume_from)
    summary = trainer.train(config.training.updates, ckpt_out, log_path, progress=not no_progress)
    console.print(summary_table("train", [
        ("updates", summary.updates),
        ("first loss", summary.first_loss if summary.first_loss is not None else "-"),
        ("last loss", summary.last_loss if summary.last_loss is not None else "-"),
        ("checkpoint", summary.checkpoint),
        ("log", summary.log_path),
    ]))
