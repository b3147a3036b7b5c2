import logging

import click

from ..use_cases.ablation_study import AblationStudy
from .cli_support import console, echo_config, metrics_table, parse_seeds, resolve_config

logger = logging.getLogger(__name__)


@click.command("ablate")
@click.option("--data", required=True, type=click.Path(), help="Synthetic corpus; the last ids are held out.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--seeds", default="0,1,2", show_default=True, callback=parse_seeds,
              help="Comma-separated training seeds.")
@click.option("--updates", type=int, default=None, help="Updates per trained model.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--no-progress", is_flag=True)
def ablate(data, out, config_path, seeds, updates, device, no_progress):
    """TVCR on/off and sampling-step ablations."""
    config, _ = resolve_config(config_path, {"train_data": data, "training": {"updates": updates}})
    echo_config(config)
    study = AblationStudy.from_dataset(config, data, device=device)
    result = study.run(out, seeds, config.training.updates, progress=not no_progress)
    console.print(metrics_table(
        "ablation (seed means)",
        ("variant", "AD", "AD std", "MS-SSIM", "seconds"),
        [["input", result["baseline"]["ad"], None, result["baseline"]["ms_ssim"], None]]
        + [[key, s["ad_mean"], s["ad_std"], s["ms_ssim_mean"], s["seconds_mean"]]
           for key, s in result["summary"].items()],
    ))
    console.print(f"TVCR lowered AD in {result['tvcr_wins']} of {len(seeds)} seeds")
