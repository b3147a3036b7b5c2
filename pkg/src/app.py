"""
Command-line entry point: `python -m src.app <command>`.
"""

import logging

import click
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from . import __version__  # noqa: E402
from .controllers.ablation_controller import ablate  # noqa: E402
from .controllers.cli_support import DvdGroup  # noqa: E402
from .controllers.dewarp_controller import dewarp  # noqa: E402
from .controllers.evaluation_controller import evaluate, ingest  # noqa: E402
from .controllers.synth_controller import synth  # noqa: E402
from .controllers.training_controller import train  # noqa: E402
from .infrastructure.logging_config import configure_logging  # noqa: E402

logger = logging.getLogger(__name__)


@click.group(cls=DvdGroup)
@click.option("--log-level", default=None, help="Overrides DVD_LOG_LEVEL.")
@click.option("--log-format", type=click.Choice(["console", "json"]), default=None,
              help="Overrides DVD_LOG_FORMAT.")
@click.version_option(__version__, prog_name="dvd")
def cli(log_level, log_format):
    """Coordinate-space diffusion for document dewarping."""
    configure_logging(log_level, log_format)


cli.add_command(synth)
cli.add_command(train)
cli.add_command(dewarp)
cli.add_command(evaluate)
cli.add_command(ingest)
cli.add_command(ablate)


def main() -> None:
    cli(prog_name="dvd")


if __name__ == "__main__":
    main()
