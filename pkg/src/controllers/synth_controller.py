import logging

import click

from ..use_cases.corpus_synthesizer import CorpusSynthesizer
from .cli_support import console, echo_config, resolve_config, split_list, summary_table

logger = logging.getLogger(__name__)


@click.command("synth")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Dataset directory to create.")
@click.option("--count", type=int, default=None, help="Number of records.")
@click.option("--size", type=int, default=None, help="Image side in pixels.")
@click.option("--latent", type=int, default=None, help="Latent mapping side.")
@click.option("--layouts", default=None, help="Comma-separated layouts (single-column,two-column,complex).")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Worker processes.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--force", is_flag=True, help="Replace a non-empty output directory.")
@click.option("--no-progress", is_flag=True)
def synth(out, count, size, latent, layouts, seed, workers, config_path, force, no_progress):
    """Generate a synthetic warped-document corpus."""
    config, _ = resolve_config(config_path, {
        "seed": seed,
        "net": {"latent_size": latent},
        "synth": {"count": count, "size": size, "layouts": split_list(layouts), "workers": workers},
    })
    echo_config(config)
    records = CorpusSynthesizer(config).synthesize(out, force=force, progress=not no_progress)
    console.print(summary_table("synth", [
        ("records", len(records)),
        ("size", config.synth.size),
        ("latent", config.latent_size),
        ("output", out),
    ]))
