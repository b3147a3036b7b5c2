import logging

import click

from ..domain.models.benchmark_models import BenchmarkLayout
from ..domain.models.metric_report import METRIC_NAMES
from ..use_cases.benchmark_ingest import ingest_external_benchmark, write_pairs_manifest
from ..use_cases.evaluation_runner import EvaluationRunner
from .cli_support import console, echo_config, metrics_table, resolve_config, summary_table

logger = logging.getLogger(__name__)


@click.command("eval")
@click.option("--pred", required=True, type=click.Path(), help="Directory written by `dewarp`.")
@click.option("--gt", required=True, type=click.Path(), help="Synthetic dataset directory or pairs manifest.")
@click.option("--domains", type=click.Path(dir_okay=False), default=None,
              help="JSON id -> domain tags (default: tags from the ground truth).")
@click.option("--report-out", required=True, type=click.Path(file_okay=False))
@click.option("--ocr-endpoint", default=None, help="MLLM OCR endpoint for MMED/MMCER.")
@click.option("--flow-backend", type=click.Choice(["dis", "farneback"]), default=None)
@click.option("--full-resolution/--capped-resolution", default=None,
              help="Evaluate at the ground-truth resolution instead of capping the long side.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--allow-mixed", is_flag=True, help="Accept predictions produced by different configs.")
@click.option("--no-progress", is_flag=True)
def evaluate(pred, gt, domains, report_out, ocr_endpoint, flow_backend, full_resolution,
             config_path, allow_mixed, no_progress):
    """Score dewarped images and write report.json, report.csv and plots."""
    config, service = resolve_config(config_path, {"eval": {
        "flow_backend": flow_backend,
        "full_resolution": full_resolution,
        "ocr": {"endpoint": ocr_endpoint},
    }})
    echo_config(config)
    runner = EvaluationRunner(config, ocr_api_key=service.ocr_api_key, allow_mixed=allow_mixed)
    result = runner.run(pred, gt, report_out, domains=domains, progress=not no_progress)
    overall = result.report.overall
    console.print(metrics_table(
        f"overall ({overall.count} samples)",
        METRIC_NAMES,
        [[overall.means[name] for name in METRIC_NAMES]],
    ))
    for axis, rows in result.report.marginals.items():
        console.print(metrics_table(
            axis,
            (axis, "n") + METRIC_NAMES[:3],
            [[row.group[axis], row.count] + [row.means[name] for name in METRIC_NAMES[:3]] for row in rows],
        ))
    console.print(f"report written to {result.report_json.parent}")


@click.command("ingest")
@click.option("--dir", "directory", required=True, type=click.Path(), help="Benchmark root directory.")
@click.option("--layout", type=click.Choice([layout.value for layout in BenchmarkLayout]),
              default=BenchmarkLayout.DOCUNET_STYLE.value, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Pairs manifest to write.")
@click.option("--manifest", type=click.Path(dir_okay=False), default=None,
              help="Existing {id, distorted, gt} manifest overriding the directory convention.")
def ingest(directory, layout, out, manifest):
    """Pair an external benchmark's distorted photos with their scans."""
    pairs = ingest_external_benchmark(directory, layout, manifest=manifest)
    path = write_pairs_manifest(pairs, out)
    console.print(summary_table("ingest", [
        ("layout", pairs.layout),
        ("pairs", len(pairs.pairs)),
        ("manifest", path),
    ]))
