"""
Evaluation Runner
Scores a directory of dewarped predictions against ground truth (a synthetic
dataset or a benchmark pairs manifest) and writes report.json, report.csv
and per-domain plots.
"""

import asyncio
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

import cv2
import numpy as np
from tqdm import tqdm

from ..domain.models.errors import (
    FormatError,
    IdMismatchError,
    InvalidArgumentError,
    MetricUnavailableError,
)
from ..domain.models.mapping_models import DocumentImage
from ..domain.models.metric_report import MetricReport, ReportMeta, SampleMetrics
from ..domain.models.run_config import RunConfig
from ..domain.models.sample_models import DOMAIN_AXES, Lighting
from ..infrastructure.dataset_store import INDEX_FILE, DatasetStore, load_image
from ..infrastructure.metrics.flow_distortion import FlowSettings, distortion_metrics
from ..infrastructure.metrics.image_similarity import ms_ssim
from ..infrastructure.metrics.report_aggregator import (
    REPORT_CSV,
    REPORT_JSON,
    aggregate_report,
    write_report_csv,
    write_report_json,
)
from ..infrastructure.ocr_service import OcrClient, mllm_ocr_metrics
from ..infrastructure.pair_generator import relight
from ..infrastructure.plot_service import plot_marginals
from ..infrastructure.run_config_service import config_hash
from ..infrastructure.text_recognizer import TesseractRecognizer, text_metrics
from .benchmark_ingest import read_pairs_manifest

logger = logging.getLogger(__name__)

MIXED_HASH = "mixed"


@dataclass
class GroundTruth:
    """Reference images and domain tags keyed by id."""
    images: Dict[str, Path]
    domains: Dict[str, Dict[str, str]]
    source: str
    config_hash: Optional[str] = None
    lighting: Dict[str, str] = field(default_factory=dict)

    def image(self, sample_id: str) -> DocumentImage:
        """The flat page as the dewarped output should look; synthetic pages carry their lighting."""
        image = load_image(self.images[sample_id])
        if sample_id in self.lighting:
            return relight(image, Lighting(self.lighting[sample_id]))
        return image


@dataclass
class EvaluationResult:
    report: MetricReport
    report_json: Path
    report_csv: Path
    plots: List[Path]


def load_ground_truth(gt: Union[str, Path]) -> GroundTruth:
    """A synthetic dataset directory or a pairs manifest file."""
    gt = Path(gt)
    if gt.is_file():
        manifest = read_pairs_manifest(gt)
        return GroundTruth(
            images={p.id: Path(p.gt) for p in manifest.pairs},
            domains={p.id: dict(p.domains) for p in manifest.pairs},
            source=f"manifest:{manifest.layout}",
        )
    if gt.is_dir() and (gt / INDEX_FILE).is_file():
        store = DatasetStore(gt)
        index = store.read_index()
        listed = store.ids()
        ids = [i for i in listed
               if (store.record_dir(i) / "flat.png").is_file() and (store.record_dir(i) / "meta.json").is_file()]
        if len(ids) < len(listed):
            logger.warning(f"{len(listed) - len(ids)} indexed samples have no ground-truth files")
        domains = {i: store.read_domains(i).as_dict() for i in ids}
        return GroundTruth(
            images={i: store.record_dir(i) / "flat.png" for i in ids},
            domains=domains,
            source="dataset",
            config_hash=index.get("config_hash"),
            lighting={i: tags["lighting"] for i, tags in domains.items()},
        )
    raise InvalidArgumentError(f"ground truth must be a dataset directory or a pairs manifest: {gt}")


def load_predictions(pred: Union[str, Path]) -> Dict[str, Dict[str, object]]:
    """id → {path, config_hash} for every `<id>.png` in a dewarp output directory."""
    pred = Path(pred)
    if not pred.is_dir():
        raise InvalidArgumentError(f"prediction directory not found: {pred}")
    predictions = {}
    for path in sorted(pred.glob("*.png")):
        meta_path = path.with_suffix(".json")
        produced_by = None
        if meta_path.is_file():
            try:
                produced_by = json.loads(meta_path.read_text(encoding="utf-8")).get("config_hash")
            except json.JSONDecodeError as e:
                raise FormatError(f"invalid prediction metadata: {e}", str(meta_path))
        predictions[path.stem] = {"path": path, "config_hash": produced_by}
    return predictions


def load_domain_index(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"invalid domain index: {e}", str(path))
    if not isinstance(data, dict):
        raise FormatError("domain index must map ids to tag objects", str(path))
    return {str(k): {axis: str(v[axis]) for axis in DOMAIN_AXES if axis in v} for k, v in data.items()}


def match_to_size(image: DocumentImage, height: int, width: int) -> DocumentImage:
    if (image.height, image.width) == (height, width):
        return image
    pixels = cv2.resize(image.pixels.astype(np.float32), (width, height), interpolation=cv2.INTER_AREA)
    return DocumentImage(np.clip(pixels, 0.0, 1.0).reshape(height, width, image.channels))


class EvaluationRunner:
    """Computes every available metric for one prediction set."""

    def __init__(self, config: RunConfig, ocr_api_key: Optional[str] = None,
                 allow_mixed: bool = False, recognizer=None, ocr_transport=None):
        self.config = config
        self.eval_config = config.eval
        self.flow = FlowSettings.from_eval_config(config.eval)
        self.allow_mixed = allow_mixed
        self.ocr_api_key = ocr_api_key
        self.ocr_transport = ocr_transport
        if recognizer is None and config.eval.text_backend == "tesseract":
            recognizer = TesseractRecognizer()
        self.recognizer = recognizer
        logger.info(f"EvaluationRunner initialized: flow={self.flow.backend}, "
                    f"ocr={config.eval.ocr.endpoint or 'off'}")

    def _producing_hash(self, predictions: Dict[str, Dict[str, object]]) -> str:
        hashes = sorted({str(p["config_hash"]) for p in predictions.values() if p["config_hash"]})
        if len(hashes) > 1:
            if not self.allow_mixed:
                raise InvalidArgumentError(
                    f"predictions come from different configs {hashes}; pass --allow-mixed to compare anyway"
                )
            logger.warning(f"Evaluating predictions from mixed configs: {hashes}")
            return MIXED_HASH
        return hashes[0] if hashes else config_hash(self.config)

    def score_sample(self, dewarped: DocumentImage, gt: DocumentImage) -> SampleMetrics:
        """Image metrics and local-OCR text metrics; a failing metric is left empty with its error."""
        dewarped = match_to_size(dewarped, gt.height, gt.width)
        values: Dict[str, Optional[float]] = {}
        errors: List[str] = []
        try:
            values["ms_ssim"] = ms_ssim(dewarped, gt)
        except (MetricUnavailableError, InvalidArgumentError) as e:
            errors.append(f"ms_ssim: {e}")
        try:
            values["ld"], values["ad"] = distortion_metrics(dewarped, gt, self.flow)
        except MetricUnavailableError as e:
            errors.append(f"ld/ad: {e}")
        if self.recognizer is not None:
            try:
                values["ed"], values["cer"] = text_metrics(self.recognizer, dewarped, gt)
                if values["cer"] is None:
                    errors.append("cer: reference transcript is empty")
            except MetricUnavailableError as e:
                errors.append(f"ed/cer: {e}")
        return SampleMetrics(**values, errors=errors)

    async def _ocr_all(self, pairs: Dict[str, tuple]) -> Dict[str, object]:
        async with OcrClient.from_config(self.eval_config.ocr, api_key=self.ocr_api_key,
                                         transport=self.ocr_transport) as client:
            ids = sorted(pairs)
            outcomes = await asyncio.gather(*(mllm_ocr_metrics(*pairs[i], client) for i in ids))
        return dict(zip(ids, outcomes))

    def evaluate(self, pred: Union[str, Path], gt: Union[str, Path],
                 domains: Optional[Union[str, Path]] = None,
                 progress: bool = True) -> MetricReport:
        """
        Raises:
            IdMismatchError: prediction and ground-truth ids differ
            InvalidArgumentError: mixed producing configs without allow_mixed
        """
        predictions = load_predictions(pred)
        truth = load_ground_truth(gt)
        missing_pred = sorted(set(truth.images) - set(predictions))
        missing_gt = sorted(set(predictions) - set(truth.images))
        if missing_pred or missing_gt:
            logger.error(f"Id mismatch: {len(missing_pred)} without prediction, {len(missing_gt)} without gt")
            raise IdMismatchError(missing_pred, missing_gt)
        producing_hash = self._producing_hash(predictions)
        domain_index = load_domain_index(domains) if domains else truth.domains

        per_sample: Dict[str, SampleMetrics] = {}
        ocr_pairs = {}
        for sample_id in tqdm(sorted(predictions), disable=not progress, desc="eval"):
            dewarped = load_image(predictions[sample_id]["path"])
            reference = truth.image(sample_id)
            per_sample[sample_id] = self.score_sample(dewarped, reference)
            if self.eval_config.ocr.endpoint:
                ocr_pairs[sample_id] = (match_to_size(dewarped, reference.height, reference.width), reference)

        if ocr_pairs:
            for sample_id, outcome in asyncio.run(self._ocr_all(ocr_pairs)).items():
                metrics = per_sample[sample_id]
                metrics.mmed, metrics.mmcer = outcome.mmed, outcome.mmcer
                if outcome.error:
                    metrics.errors.append(f"mmed/mmcer: {outcome.error}")

        meta = ReportMeta(
            config_hash=producing_hash,
            generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            flow_backend=self.flow.backend,
            ocr_backend=self.eval_config.ocr.endpoint,
            extra={
                "eval_config_hash": config_hash(self.config),
                "gt_source": truth.source,
                "gt_config_hash": truth.config_hash or "",
                "text_backend": self.recognizer.name if self.recognizer is not None else "none",
            },
        )
        return aggregate_report(per_sample, domain_index, meta)

    def run(self, pred: Union[str, Path], gt: Union[str, Path], report_out: Union[str, Path],
            domains: Optional[Union[str, Path]] = None, progress: bool = True) -> EvaluationResult:
        report = self.evaluate(pred, gt, domains, progress)
        out = Path(report_out)
        out.mkdir(parents=True, exist_ok=True)
        json_path = write_report_json(report, out / REPORT_JSON)
        csv_path = write_report_csv(report, out / REPORT_CSV)
        plots = plot_marginals(report, out / "plots")
        logger.info(f"Report for {len(report.per_sample)} samples written to {out}")
        return EvaluationResult(report, json_path, csv_path, plots)
