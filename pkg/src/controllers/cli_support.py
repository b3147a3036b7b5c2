"""
Shared pieces of the command-line controllers: config resolution from flags,
list-valued options and rich summary tables.
"""

import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import click
from rich.console import Console
from rich.table import Table

from ..domain.models.errors import DvdError
from ..domain.models.run_config import RunConfig
from ..infrastructure.run_config_service import RunConfigService, config_hash

logger = logging.getLogger(__name__)

console = Console()


class DvdGroup(click.Group):
    """Click group that turns domain errors into their exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except DvdError as e:
            logger.error(f"{type(e).__name__}: {str(e)}")
            click.echo(f"error: {e}", err=True)
            ctx.exit(e.exit_code)


def split_list(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_seeds(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    items = split_list(value)
    if items is None:
        return None
    try:
        return [int(item) for item in items]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def resolve_config(config_path: Optional[str],
                   overrides: Dict[str, Any]) -> Tuple[RunConfig, RunConfigService]:
    service = RunConfigService()
    return service.load(config_path, overrides), service


def summary_table(title: str, rows: Iterable[Tuple[str, Any]]) -> Table:
    table = Table(title=title, show_header=False)
    table.add_column("key", style="bold")
    table.add_column("value")
    for key, value in rows:
        table.add_row(key, str(value))
    return table


def metrics_table(title: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Table:
    table = Table(title=title)
    for name in header:
        table.add_column(name)
    for row in rows:
        table.add_row(*("-" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)) for v in row))
    return table


def echo_config(config: RunConfig) -> None:
    console.print(f"config [bold]{config_hash(config)}[/bold]")
