"""
Per-domain bar plots of aggregated metrics.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..domain.models.metric_report import MetricReport  # noqa: E402

logger = logging.getLogger(__name__)

PLOTTED_METRICS = ("ms_ssim", "ld", "ad")


def plot_marginals(report: MetricReport, out_dir: Union[str, Path],
                   metrics: Sequence[str] = PLOTTED_METRICS) -> List[Path]:
    """
    One PNG per domain axis (`<axis>.png`), one bar panel per metric.
    The producing config hash is stored in the PNG Description field.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for axis, rows in report.marginals.items():
        labels = [row.group[axis] for row in rows]
        fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.2), squeeze=False)
        for ax, name in zip(axes[0], metrics):
            _bar_panel(ax, labels, [row.means[name] for row in rows])
            ax.set_title(name)
        fig.suptitle(f"{axis} (config {report.meta.config_hash})")
        fig.tight_layout()
        path = out_dir / f"{axis}.png"
        fig.savefig(path, format="png", dpi=100, facecolor="white",
                    metadata={"Description": f"config_hash={report.meta.config_hash}"})
        plt.close(fig)
        written.append(path)
    logger.info(f"Wrote {len(written)} plots to {out_dir}")
    return written


def _bar_panel(ax, labels: Sequence[str], values: Sequence[Optional[float]]) -> None:
    """Bars for present means; a missing mean gets an "n/a" marker instead of a bar."""
    present = [i for i, value in enumerate(values) if value is not None]
    ax.bar(present, [values[i] for i in present], color="#4c72b0")
    for i, value in enumerate(values):
        if value is None:
            ax.text(i, 0.0, "n/a", ha="center", va="bottom", color="#777777")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30)
    ax.set_xlim(-0.6, len(labels) - 0.4)
