"""
Report Aggregator
Per-domain means of per-sample metrics, plus JSON and CSV writers.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

from ...domain.models.errors import AggregationError
from ...domain.models.metric_report import (
    METRIC_NAMES,
    AggregateRow,
    MetricReport,
    ReportMeta,
    SampleMetrics,
)
from ...domain.models.sample_models import DOMAIN_AXES

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
CSV_COLUMNS = ("id",) + DOMAIN_AXES + METRIC_NAMES + ("errors",)


def _aggregate(group: Dict[str, str], ids: List[str],
               per_sample: Mapping[str, SampleMetrics]) -> AggregateRow:
    means: Dict[str, object] = {}
    counts: Dict[str, int] = {}
    for name in METRIC_NAMES:
        values = [getattr(per_sample[i], name) for i in ids]
        values = [v for v in values if v is not None]
        counts[name] = len(values)
        means[name] = math.fsum(values) / len(values) if values else None
    return AggregateRow(group=group, count=len(ids), means=means, counts=counts)


def _grouped(ids: List[str], domain_index: Mapping[str, Mapping[str, str]],
             axes: Tuple[str, ...]) -> Dict[Tuple[str, ...], List[str]]:
    groups: Dict[Tuple[str, ...], List[str]] = {}
    for sample_id in ids:
        key = tuple(domain_index[sample_id][axis] for axis in axes)
        groups.setdefault(key, []).append(sample_id)
    return dict(sorted(groups.items()))


def aggregate_report(per_sample: Mapping[str, SampleMetrics],
                     domain_index: Mapping[str, Mapping[str, str]],
                     meta: ReportMeta) -> MetricReport:
    """
    Means of every metric per domain combination, per axis and overall.

    Samples are visited in sorted-id order and summed with math.fsum, so the
    report depends only on the set of samples, never on their order.

    Raises:
        AggregationError: a sample has no (or incomplete) domain tags
    """
    ids = sorted(per_sample)
    missing = [i for i in ids if i not in domain_index
               or any(axis not in domain_index[i] for axis in DOMAIN_AXES)]
    if missing:
        logger.error(f"Cannot aggregate: {len(missing)} samples lack domain tags")
        raise AggregationError("samples without complete domain tags", missing)

    combinations = [
        _aggregate(dict(zip(DOMAIN_AXES, key)), members, per_sample)
        for key, members in _grouped(ids, domain_index, DOMAIN_AXES).items()
    ]
    marginals = {
        axis: [
            _aggregate({axis: key[0]}, members, per_sample)
            for key, members in _grouped(ids, domain_index, (axis,)).items()
        ]
        for axis in DOMAIN_AXES
    }
    overall = _aggregate({}, ids, per_sample)
    logger.info(f"Aggregated {len(ids)} samples into {len(combinations)} domain combinations")
    return MetricReport(
        per_sample={i: per_sample[i] for i in ids},
        domains={i: {axis: domain_index[i][axis] for axis in DOMAIN_AXES} for i in ids},
        combinations=combinations,
        marginals=marginals,
        overall=overall,
        meta=meta,
    )


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report.model_dump(), indent=2, sort_keys=True) + "\n"


def write_report_json(report: MetricReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(report_to_json(report), encoding="utf-8")
    return path


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_report_csv(report: MetricReport, path: Union[str, Path]) -> Path:
    """One row per sample; missing metrics are empty cells, floats are written round-trip exact."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for sample_id, metrics in report.per_sample.items():
            tags = report.domains[sample_id]
            writer.writerow(
                [sample_id]
                + [tags[axis] for axis in DOMAIN_AXES]
                + [_cell(getattr(metrics, name)) for name in METRIC_NAMES]
                + ["; ".join(metrics.errors)]
            )
    return path


def read_report_csv(path: Union[str, Path]) -> Tuple[Dict[str, SampleMetrics], Dict[str, Dict[str, str]]]:
    """Inverse of write_report_csv, for recomputing aggregates from the flat file."""
    per_sample: Dict[str, SampleMetrics] = {}
    domains: Dict[str, Dict[str, str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            values = {name: float(row[name]) if row[name] else None for name in METRIC_NAMES}
            errors = [e for e in row["errors"].split("; ") if e]
            per_sample[row["id"]] = SampleMetrics(**values, errors=errors)
            domains[row["id"]] = {axis: row[axis] for axis in DOMAIN_AXES}
    return per_sample, domains
